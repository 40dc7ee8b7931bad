#include "gvi/divergence.hpp"

#include <cmath>
#include <sstream>

#include "gvi/error.hpp"

namespace gvi {

namespace {

struct DimTerm {
  double value = 0.0;
  double d_mu = 0.0;
  double d_log_sigma = 0.0;
};

DimTerm kld_dim(double mq, double sq2, double mp, double sp2) {
  const double delta = mq - mp;
  return {0.5 * (sq2 / sp2 + delta * delta / sp2 - 1.0 + std::log(sp2) - std::log(sq2)), delta / sp2,
          sq2 / sp2 - 1.0};
}

// KLD(p || q), differentiated in q's parameters.
DimTerm reverse_kld_dim(double mq, double sq2, double mp, double sp2) {
  const double delta = mq - mp;
  return {0.5 * (sp2 / sq2 + delta * delta / sq2 - 1.0 + std::log(sq2) - std::log(sp2)), delta / sq2,
          1.0 - (sp2 + delta * delta) / sq2};
}

// Log-normalizer of a univariate normal in natural parameters
// (eta = mu / var, lambda = 1 / var), dropping the 2*pi constant.
double log_normalizer(double eta, double lambda) { return 0.5 * eta * eta / lambda - 0.5 * std::log(lambda); }

DimTerm renyi_dim(double mq, double sq2, double mp, double sp2, double alpha) {
  const double lam_q = 1.0 / sq2;
  const double lam_p = 1.0 / sp2;
  const double eta_q = mq * lam_q;
  const double eta_p = mp * lam_p;
  const double lam_a = alpha * lam_q + (1.0 - alpha) * lam_p;
  const double eta_a = alpha * eta_q + (1.0 - alpha) * eta_p;

  const double z_a = log_normalizer(eta_a, lam_a);
  const double z_q = log_normalizer(eta_q, lam_q);
  const double z_p = log_normalizer(eta_p, lam_p);
  const double scale = 1.0 / (alpha - 1.0);
  const double value = scale * (z_a - alpha * z_q - (1.0 - alpha) * z_p);

  // dA/deta is the mean, dA/dlambda is -(mean^2 + var) / 2.
  const double m_a = eta_a / lam_a;
  const double v_a = 1.0 / lam_a;
  const double d_eta_q = scale * alpha * (m_a - mq);
  const double d_lam_q = scale * alpha * 0.5 * ((mq * mq + sq2) - (m_a * m_a + v_a));
  return {value, d_eta_q / sq2, d_eta_q * (-2.0 * mq / sq2) + d_lam_q * (-2.0 / sq2)};
}

DimTerm fisher_dim(double mq, double sq2, double mp, double sp2) {
  const double c1 = mq / sq2 - mp / sp2;
  const double c2 = 1.0 / sp2 - 1.0 / sq2;
  const double value = c1 * c1 + 2.0 * c1 * c2 * mq + c2 * c2 * (sq2 + mq * mq);
  // The integrand reduces to ((mq - mp) / sp2)^2 + c2^2 * sq2.
  const double delta = mq - mp;
  return {value, 2.0 * delta / (sp2 * sp2), 4.0 * c2 + 2.0 * c2 * c2 * sq2};
}

template <typename DimFn>
DivergenceValue accumulate(const MeanFieldNormal& q, const MeanFieldNormal& p, DimFn fn) {
  require_same_length(q.dim(), p.dim(), "divergence");
  DivergenceValue out{0.0, std::vector<double>(q.dim()), std::vector<double>(q.dim())};
  for (std::size_t d = 0; d < q.dim(); ++d) {
    const DimTerm t = fn(q.mu(d), q.variance(d), p.mu(d), p.variance(d));
    out.value += t.value;
    out.grad_mu[d] = t.d_mu;
    out.grad_log_sigma[d] = t.d_log_sigma;
  }
  return out;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("divergence order alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
}

DivergenceValue renyi_value(const MeanFieldNormal& q, const MeanFieldNormal& p, double alpha) {
  check_alpha(alpha);
  return accumulate(q, p, [alpha](double mq, double sq2, double mp, double sp2) {
    return renyi_dim(mq, sq2, mp, sp2, alpha);
  });
}

DivergenceValue alpha_div_value(const MeanFieldNormal& q, const MeanFieldNormal& p, double alpha) {
  DivergenceValue rd = renyi_value(q, p, alpha);
  const double e = std::exp((alpha - 1.0) * rd.value);
  const double chain = e / alpha;
  for (auto& g : rd.grad_mu) g *= chain;
  for (auto& g : rd.grad_log_sigma) g *= chain;
  rd.value = (e - 1.0) / (alpha * (alpha - 1.0));
  return rd;
}

}  // namespace

std::string_view to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::KLD: return "KLD";
    case DivergenceKind::ReverseKLD: return "ReverseKLD";
    case DivergenceKind::RenyiAlpha: return "RenyiAlpha";
    case DivergenceKind::AlphaDiv: return "AlphaDiv";
    case DivergenceKind::Jeffreys: return "Jeffreys";
    case DivergenceKind::Fisher: return "Fisher";
  }
  return "?";
}

DivergenceKind parse_divergence_kind(std::string_view tag) {
  for (auto k : {DivergenceKind::KLD, DivergenceKind::ReverseKLD, DivergenceKind::RenyiAlpha,
                 DivergenceKind::AlphaDiv, DivergenceKind::Jeffreys, DivergenceKind::Fisher}) {
    if (to_string(k) == tag) return k;
  }
  throw ConfigError("unknown divergence kind '" + std::string(tag) + "'");
}

DivergenceSpec::DivergenceSpec(DivergenceKind kind, std::optional<double> alpha) : kind_(kind), alpha_(alpha) {
  const bool needs_alpha = kind == DivergenceKind::RenyiAlpha || kind == DivergenceKind::AlphaDiv;
  if (needs_alpha && !alpha) throw ConfigError(std::string(to_string(kind)) + " requires alpha");
  if (!needs_alpha && alpha) throw ConfigError(std::string(to_string(kind)) + " takes no alpha");
  if (alpha) check_alpha(*alpha);
}

std::string DivergenceSpec::tag() const {
  std::ostringstream os;
  os << to_string(kind_);
  if (alpha_) os << '(' << *alpha_ << ')';
  return os.str();
}

std::vector<DivergenceSpec> all_divergences(double alpha) {
  return {DivergenceSpec(DivergenceKind::KLD),
          DivergenceSpec(DivergenceKind::ReverseKLD),
          DivergenceSpec(DivergenceKind::RenyiAlpha, alpha),
          DivergenceSpec(DivergenceKind::AlphaDiv, alpha),
          DivergenceSpec(DivergenceKind::Jeffreys),
          DivergenceSpec(DivergenceKind::Fisher)};
}

double kld_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p) { return accumulate(q, p, kld_dim).value; }

double reverse_kld_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p) {
  return accumulate(q, p, reverse_kld_dim).value;
}

double renyi_alpha_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p, double alpha) {
  return renyi_value(q, p, alpha).value;
}

double alpha_div_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p, double alpha) {
  check_alpha(alpha);
  return (std::exp((alpha - 1.0) * renyi_alpha_mfn(q, p, alpha)) - 1.0) / (alpha * (alpha - 1.0));
}

double jeffreys_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p) {
  return kld_mfn(q, p) + reverse_kld_mfn(q, p);
}

double fisher_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p) { return accumulate(q, p, fisher_dim).value; }

DivergenceValue evaluate(const DivergenceSpec& spec, const MeanFieldNormal& q, const MeanFieldNormal& p) {
  switch (spec.kind()) {
    case DivergenceKind::KLD: return accumulate(q, p, kld_dim);
    case DivergenceKind::ReverseKLD: return accumulate(q, p, reverse_kld_dim);
    case DivergenceKind::RenyiAlpha: return renyi_value(q, p, *spec.alpha());
    case DivergenceKind::AlphaDiv: return alpha_div_value(q, p, *spec.alpha());
    case DivergenceKind::Jeffreys: {
      DivergenceValue a = accumulate(q, p, kld_dim);
      const DivergenceValue b = accumulate(q, p, reverse_kld_dim);
      a.value += b.value;
      for (std::size_t d = 0; d < q.dim(); ++d) {
        a.grad_mu[d] += b.grad_mu[d];
        a.grad_log_sigma[d] += b.grad_log_sigma[d];
      }
      return a;
    }
    case DivergenceKind::Fisher: return accumulate(q, p, fisher_dim);
  }
  throw ConfigError("unsupported divergence");
}

DivergenceValue evaluate(const DivergenceSpec& spec, const NormalMixture& q, const MeanFieldNormal& p) {
  if (q.size() != 1) {
    throw ConfigError("no closed form for " + spec.tag() + " with a " + std::to_string(q.size()) +
                      "-component normal mixture");
  }
  return evaluate(spec, q.component(0), p);
}

double mc_divergence(const MeanFieldNormal& q, const MeanFieldNormal& p, const DivergenceSpec& spec,
                     std::size_t sample_count, std::uint64_t seed) {
  require_same_length(q.dim(), p.dim(), "mc_divergence");
  if (sample_count == 0) throw ConfigError("mc_divergence: sample_count must be positive");
  Rng rng(seed);
  const std::size_t dim = q.dim();
  std::vector<double> noise(dim);
  const double inv_s = 1.0 / static_cast<double>(sample_count);

  auto mean_log_ratio = [&](const MeanFieldNormal& base, const MeanFieldNormal& other) {
    double acc = 0.0;
    for (std::size_t s = 0; s < sample_count; ++s) {
      standard_normal(rng, noise);
      const auto theta = sample_reparam(base, noise);
      acc += log_pdf(base, theta) - log_pdf(other, theta);
    }
    return acc * inv_s;
  };
  // E_q[(q/p)^(alpha-1)]
  auto mean_power_ratio = [&](double alpha) {
    double acc = 0.0;
    for (std::size_t s = 0; s < sample_count; ++s) {
      standard_normal(rng, noise);
      const auto theta = sample_reparam(q, noise);
      acc += std::exp((alpha - 1.0) * (log_pdf(q, theta) - log_pdf(p, theta)));
    }
    return acc * inv_s;
  };

  switch (spec.kind()) {
    case DivergenceKind::KLD: return mean_log_ratio(q, p);
    case DivergenceKind::ReverseKLD: return mean_log_ratio(p, q);
    case DivergenceKind::Jeffreys: {
      const double forward = mean_log_ratio(q, p);
      return forward + mean_log_ratio(p, q);
    }
    case DivergenceKind::RenyiAlpha: {
      const double a = *spec.alpha();
      return std::log(mean_power_ratio(a)) / (a - 1.0);
    }
    case DivergenceKind::AlphaDiv: {
      const double a = *spec.alpha();
      return (mean_power_ratio(a) - 1.0) / (a * (a - 1.0));
    }
    case DivergenceKind::Fisher: {
      double acc = 0.0;
      for (std::size_t s = 0; s < sample_count; ++s) {
        standard_normal(rng, noise);
        const auto theta = sample_reparam(q, noise);
        for (std::size_t d = 0; d < dim; ++d) {
          const double score_q = -(theta[d] - q.mu(d)) / q.variance(d);
          const double score_p = -(theta[d] - p.mu(d)) / p.variance(d);
          acc += (score_q - score_p) * (score_q - score_p);
        }
      }
      return acc * inv_s;
    }
  }
  throw ConfigError("unsupported divergence");
}

}  // namespace gvi

#include "gvi/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gvi/error.hpp"

namespace gvi {

std::string FamilySpec::tag() const {
  if (kind == FamilyKind::MeanFieldNormal) return "MeanFieldNormal";
  return "NormalMixture(" + std::to_string(components) + ")";
}

GviProblem::GviProblem(std::shared_ptr<const LossModel> model, DivergenceSpec divergence, MeanFieldNormal prior,
                       FamilySpec family)
    : model_(std::move(model)), divergence_(divergence), prior_(std::move(prior)), family_(family) {
  if (!model_) throw ConfigError("GviProblem: missing loss model");
  if (model_->size() == 0) throw DimensionError("GviProblem: empty dataset");
  require_same_length(prior_.dim(), model_->theta_dim(), "GviProblem prior");
  if (family_.kind == FamilyKind::MeanFieldNormal) family_.components = 1;
  if (family_.components == 0) throw ConfigError("GviProblem: mixture needs at least one component");
  if (family_.components > 1 && divergence_.kind() != DivergenceKind::KLD) {
    throw ConfigError("GviProblem: " + divergence_.tag() + " has no supported form for " + family_.tag());
  }
}

std::size_t param_count(const GviProblem& problem) {
  const std::size_t k = problem.family().components;
  const std::size_t logits = problem.family().kind == FamilyKind::NormalMixture ? k : 0;
  return k * 2 * problem.theta_dim() + logits + problem.model().latent_count();
}

std::vector<double> flatten(const GviProblem& problem, const VariationalParams& params) {
  const std::size_t dim = problem.theta_dim();
  require_same_length(params.q.size(), problem.family().components, "flatten components");
  require_same_length(params.q.dim(), dim, "flatten dimension");
  std::vector<double> flat;
  flat.reserve(param_count(problem));
  for (const auto& c : params.q.components()) {
    flat.insert(flat.end(), c.mu().begin(), c.mu().end());
    flat.insert(flat.end(), c.log_sigma().begin(), c.log_sigma().end());
  }
  if (problem.family().kind == FamilyKind::NormalMixture) {
    flat.insert(flat.end(), params.q.logits().begin(), params.q.logits().end());
  }
  if (problem.has_latents()) {
    if (!params.z) throw DimensionError("flatten: latent posterior required");
    require_same_length(params.z->size(), problem.model().latent_count(), "flatten latents");
    flat.insert(flat.end(), params.z->logits().begin(), params.z->logits().end());
  }
  return flat;
}

VariationalParams unflatten(const GviProblem& problem, std::span<const double> flat) {
  require_same_length(flat.size(), param_count(problem), "unflatten");
  const std::size_t dim = problem.theta_dim();
  const std::size_t k_count = problem.family().components;
  std::vector<MeanFieldNormal> comps;
  comps.reserve(k_count);
  auto it = flat.begin();
  for (std::size_t k = 0; k < k_count; ++k) {
    std::vector<double> mu(it, it + dim);
    std::vector<double> ls(it + dim, it + 2 * dim);
    comps.emplace_back(std::move(mu), std::move(ls));
    it += 2 * dim;
  }
  std::vector<double> logits(k_count, 0.0);
  if (problem.family().kind == FamilyKind::NormalMixture) {
    std::copy(it, it + k_count, logits.begin());
    it += k_count;
  }
  std::optional<BernoulliLatentPosterior> z;
  if (problem.has_latents()) z.emplace(std::vector<double>(it, flat.end()));
  return {NormalMixture(std::move(comps), std::move(logits)), std::move(z)};
}

VariationalParams default_init(const GviProblem& problem) {
  const std::size_t dim = problem.theta_dim();
  std::vector<MeanFieldNormal> comps(problem.family().components,
                                     MeanFieldNormal(std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)));
  std::optional<BernoulliLatentPosterior> z;
  if (problem.has_latents()) z = BernoulliLatentPosterior::uniform(problem.model().latent_count());
  const std::size_t k = comps.size();
  return {NormalMixture(std::move(comps), std::vector<double>(k, 0.0)), std::move(z)};
}

VariationalParams random_init(const GviProblem& problem, std::uint64_t seed) {
  VariationalParams init = default_init(problem);
  Rng rng(seed);
  const std::size_t dim = problem.theta_dim();
  std::vector<MeanFieldNormal> comps;
  for (const auto& c : init.q.components()) {
    std::vector<double> mu(dim);
    standard_normal(rng, mu);
    comps.emplace_back(std::move(mu), std::vector<double>(c.log_sigma().begin(), c.log_sigma().end()));
  }
  init.q = NormalMixture(std::move(comps), std::vector<double>(init.q.logits().begin(), init.q.logits().end()));
  return init;
}

ObjectiveEstimate estimate(const GviProblem& problem, const VariationalParams& params, std::size_t mc_samples,
                           std::uint64_t seed) {
  if (mc_samples == 0) throw ConfigError("estimate: mc_samples must be positive");
  const LossModel& model = problem.model();
  const std::size_t dim = problem.theta_dim();
  const std::size_t k_count = problem.family().components;
  const bool mixture_family = problem.family().kind == FamilyKind::NormalMixture;
  const bool mixture_mc = k_count > 1;
  const std::size_t latents = model.latent_count();
  const double inv_n = 1.0 / static_cast<double>(problem.n());
  const double inv_s = 1.0 / static_cast<double>(mc_samples);

  require_same_length(params.q.size(), k_count, "estimate components");
  require_same_length(params.q.dim(), dim, "estimate dimension");
  std::vector<double> z_weights;
  if (latents > 0) {
    if (!params.z) throw DimensionError("estimate: latent posterior required");
    require_same_length(params.z->size(), latents, "estimate latents");
    z_weights = params.z->probs_first();
  }

  ObjectiveEstimate out;
  out.mc_samples = mc_samples;
  out.seed = seed;
  out.grad.assign(param_count(problem), 0.0);
  const std::size_t logit_offset = k_count * 2 * dim;
  const std::size_t latent_offset = logit_offset + (mixture_family ? k_count : 0);

  const std::vector<double> w = params.q.weights();
  std::vector<double> noise(dim), theta(dim), g_theta(dim), g_weights(latents), g_latent_acc(latents, 0.0);
  std::vector<double> resp(k_count);
  std::vector<double> per_component(k_count, 0.0);
  double variance_acc = 0.0;
  Rng rng(seed);

  for (std::size_t k = 0; k < k_count; ++k) {
    const MeanFieldNormal& comp = params.q.component(k);
    const std::vector<double> sig = comp.sigmas();
    double* g_mu = &out.grad[k * 2 * dim];
    double* g_ls = g_mu + dim;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < mc_samples; ++s) {
      standard_normal(rng, noise);
      for (std::size_t d = 0; d < dim; ++d) theta[d] = comp.mu(d) + sig[d] * noise[d];

      double f = model.mean_loss(theta, z_weights, g_theta, g_weights);

      if (mixture_mc) {
        // Monte-Carlo KLD integrand (log q(theta) - log prior(theta)) / n
        const double log_q = params.q.log_pdf(theta, resp);
        f += (log_q - log_pdf(problem.prior(), theta)) * inv_n;
        const double explicit_w = w[k] * inv_s * inv_n;
        for (std::size_t d = 0; d < dim; ++d) {
          double d_log_q = 0.0;
          for (std::size_t j = 0; j < k_count; ++j) {
            const MeanFieldNormal& cj = params.q.component(j);
            const double var_j = cj.variance(d);
            const double u = theta[d] - cj.mu(d);
            d_log_q -= resp[j] * u / var_j;
            // explicit dependence of log q on component j's parameters
            out.grad[j * 2 * dim + d] += explicit_w * resp[j] * u / var_j;
            out.grad[j * 2 * dim + dim + d] += explicit_w * resp[j] * (u * u / var_j - 1.0);
          }
          const double d_log_prior = -(theta[d] - problem.prior().mu(d)) / problem.prior().variance(d);
          g_theta[d] += (d_log_q - d_log_prior) * inv_n;
        }
        for (std::size_t j = 0; j < k_count; ++j) out.grad[logit_offset + j] += explicit_w * (resp[j] - w[j]);
      }

      sum += f;
      sum_sq += f * f;
      const double scale = w[k] * inv_s;
      for (std::size_t d = 0; d < dim; ++d) {
        g_mu[d] += scale * g_theta[d];
        g_ls[d] += scale * g_theta[d] * sig[d] * noise[d];
      }
      for (std::size_t i = 0; i < latents; ++i) g_latent_acc[i] += scale * g_weights[i];
    }
    per_component[k] = sum * inv_s;
    if (mc_samples > 1) {
      const double var = std::max(sum_sq * inv_s - per_component[k] * per_component[k], 0.0) *
                         static_cast<double>(mc_samples) / static_cast<double>(mc_samples - 1);
      variance_acc += w[k] * w[k] * var * inv_s;
    }
  }

  double mixed = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) mixed += w[k] * per_component[k];
  if (mixture_family) {
    for (std::size_t j = 0; j < k_count; ++j) out.grad[logit_offset + j] += w[j] * (per_component[j] - mixed);
  }
  for (std::size_t i = 0; i < latents; ++i) {
    const double p = z_weights[i];
    out.grad[latent_offset + i] = g_latent_acc[i] * p * (1.0 - p);
  }

  out.loss_term = mixed;
  if (!mixture_mc) {
    const DivergenceValue dv = evaluate(problem.divergence(), params.q.component(0), problem.prior());
    out.divergence_term = dv.value * inv_n;
    for (std::size_t d = 0; d < dim; ++d) {
      out.grad[d] += dv.grad_mu[d] * inv_n;
      out.grad[dim + d] += dv.grad_log_sigma[d] * inv_n;
    }
  }
  out.value = out.loss_term + out.divergence_term;
  out.std_error = std::sqrt(variance_acc);
  return out;
}

// ---------------------------------------------------------------------------

double GaussianToy::population_loss(double theta) const {
  const double diff = theta - pop_mean;
  return 0.5 * std::log(2.0 * std::numbers::pi * sigma2) + (diff * diff + pop_var) / (2.0 * sigma2);
}

DeterministicValue deterministic_objective(const GaussianToy& toy, const MeanFieldNormal& q, std::size_t n) {
  if (q.dim() != 1 || toy.prior.dim() != 1) throw DimensionError("deterministic_objective: 1-D toy only");
  if (n == 0) throw ConfigError("deterministic_objective: n must be positive");
  const double inv_n = 1.0 / static_cast<double>(n);
  const double diff = q.mu(0) - toy.pop_mean;
  const double var_q = q.variance(0);
  const DivergenceValue dv = evaluate(toy.divergence, q, toy.prior);
  DeterministicValue out;
  // E_q[(theta - m)^2] = (mu_q - m)^2 + sigma_q^2
  out.value = 0.5 * std::log(2.0 * std::numbers::pi * toy.sigma2) + (diff * diff + var_q + toy.pop_var) / (2.0 * toy.sigma2) +
              dv.value * inv_n;
  out.grad_mu = diff / toy.sigma2 + dv.grad_mu[0] * inv_n;
  out.grad_log_sigma = var_q / toy.sigma2 + dv.grad_log_sigma[0] * inv_n;
  return out;
}

MeanFieldNormal minimize_deterministic_objective(const GaussianToy& toy, std::size_t n) {
  double mu = toy.prior.mu(0);
  double ls = toy.prior.log_sigma(0);
  auto eval = [&](double m, double l) { return deterministic_objective(toy, MeanFieldNormal({m}, {l}), n); };
  DeterministicValue cur = eval(mu, ls);
  double step = 1.0;
  for (int it = 0; it < 100000; ++it) {
    const double g2 = cur.grad_mu * cur.grad_mu + cur.grad_log_sigma * cur.grad_log_sigma;
    if (g2 < 1e-26) break;
    step = std::min(step * 2.0, 1e3);
    bool accepted = false;
    while (step > 1e-16) {
      const double m_new = mu - step * cur.grad_mu;
      const double l_new = ls - step * cur.grad_log_sigma;
      const DeterministicValue cand = eval(m_new, l_new);
      const double g2_new = cand.grad_mu * cand.grad_mu + cand.grad_log_sigma * cand.grad_log_sigma;
      // Near the optimum value differences drop below rounding; fall back to gradient decrease there.
      const bool flat = std::abs(cand.value - cur.value) <= 1e-14 * std::max(1.0, std::abs(cur.value));
      if (cand.value <= cur.value - 0.5 * step * g2 || (flat && g2_new < g2)) {
        mu = m_new;
        ls = l_new;
        cur = cand;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  // Newton polish with a finite-difference Hessian of the analytic gradient.
  for (int it = 0; it < 20; ++it) {
    const double h = 1e-6;
    const DeterministicValue pm = eval(mu + h, ls), mm = eval(mu - h, ls);
    const DeterministicValue pl = eval(mu, ls + h), ml = eval(mu, ls - h);
    const double h11 = (pm.grad_mu - mm.grad_mu) / (2.0 * h);
    const double h22 = (pl.grad_log_sigma - ml.grad_log_sigma) / (2.0 * h);
    const double h12 = 0.5 * ((pm.grad_log_sigma - mm.grad_log_sigma) + (pl.grad_mu - ml.grad_mu)) / (2.0 * h);
    const double det = h11 * h22 - h12 * h12;
    if (!(det > 0.0) || !(h11 > 0.0)) break;
    const double dm = (h22 * cur.grad_mu - h12 * cur.grad_log_sigma) / det;
    const double dl = (h11 * cur.grad_log_sigma - h12 * cur.grad_mu) / det;
    const DeterministicValue cand = eval(mu - dm, ls - dl);
    const double g2 = cur.grad_mu * cur.grad_mu + cur.grad_log_sigma * cur.grad_log_sigma;
    const double g2_new = cand.grad_mu * cand.grad_mu + cand.grad_log_sigma * cand.grad_log_sigma;
    if (!(g2_new < g2)) break;
    mu -= dm;
    ls -= dl;
    cur = cand;
  }
  return MeanFieldNormal({mu}, {ls});
}

double epsilon_n(const GaussianToy& toy, std::span<const double> data, const MeanFieldNormal& qbar) {
  if (qbar.dim() != 1) throw DimensionError("epsilon_n: 1-D toy only");
  const GaussianMeanModel model(data, toy.sigma2);
  const double xbar = model.sample_mean();
  const double second = model.sample_second_moment();
  // Under a Gaussian q the bracket is affine in theta; its theta^2 terms cancel.
  const double bracket = (second - toy.pop_mean * toy.pop_mean - toy.pop_var) - 2.0 * qbar.mu(0) * (xbar - toy.pop_mean);
  return std::abs(bracket) / toy.sigma2;
}

}  // namespace gvi

#include "gvi/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gvi/error.hpp"

namespace gvi {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_gamma(double gamma) {
  if (!(gamma > 1.0) || !std::isfinite(gamma)) {
    throw ConfigError("gamma-score requires gamma > 1, got " + std::to_string(gamma));
  }
}

void check_component(int z) {
  if (z != 1 && z != 2) throw ConfigError("mixture component must be 1 or 2, got " + std::to_string(z));
}

// -log N(x | mu^z, I_d); d = x.size(), theta = mu1 ++ mu2.
double component_nll(std::span<const double> theta, std::span<const double> x, int z) {
  const std::size_t d = x.size();
  const std::size_t offset = z == 1 ? 0 : d;
  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double r = x[j] - theta[offset + j];
    sq += r * r;
  }
  return 0.5 * static_cast<double>(d) * kLog2Pi + 0.5 * sq;
}

// gamma/(gamma-1) * I^((gamma-1)/gamma) for the unit-variance d-dim normal.
double gamma_score_scale(double gamma, std::size_t d) {
  return gamma / (gamma - 1.0) * std::pow(gamma_norm_gaussian(gamma, d, 1.0), (gamma - 1.0) / gamma);
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::BlrNll: return "BlrNll";
    case LossKind::BmmNll: return "BmmNll";
    case LossKind::BmmGammaScore: return "BmmGammaScore";
    case LossKind::GaussianMeanNll: return "GaussianMeanNll";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view tag) {
  for (auto k : {LossKind::BlrNll, LossKind::BmmNll, LossKind::BmmGammaScore, LossKind::GaussianMeanNll}) {
    if (to_string(k) == tag) return k;
  }
  throw ConfigError("unknown loss kind '" + std::string(tag) + "'");
}

LossSpec::LossSpec(LossKind kind, std::optional<double> gamma) : kind_(kind), gamma_(gamma) {
  const bool needs_gamma = kind == LossKind::BmmGammaScore;
  if (needs_gamma && !gamma) throw ConfigError("BmmGammaScore requires gamma");
  if (!needs_gamma && gamma) throw ConfigError(std::string(to_string(kind)) + " takes no gamma");
  if (gamma) check_gamma(*gamma);
}

std::string LossSpec::tag() const {
  std::ostringstream os;
  os << to_string(kind_);
  if (gamma_) os << '(' << *gamma_ << ')';
  return os.str();
}

double blr_nll(std::span<const double> theta, const BlrDatum& datum, std::span<double> grad) {
  const std::size_t p = datum.x_tilde.size();
  require_same_length(theta.size(), p + 1, "blr_nll theta");
  double fit = 0.0;
  for (std::size_t j = 0; j < p; ++j) fit += datum.x_tilde[j] * theta[j];
  const double log_var = theta[p];
  const double inv_var = std::exp(-log_var);
  const double resid = datum.y - fit;
  if (!grad.empty()) {
    require_same_length(grad.size(), p + 1, "blr_nll grad");
    for (std::size_t j = 0; j < p; ++j) grad[j] = -resid * inv_var * datum.x_tilde[j];
    grad[p] = 0.5 - 0.5 * resid * resid * inv_var;
  }
  return 0.5 * (kLog2Pi + log_var) + 0.5 * resid * resid * inv_var;
}

double bmm_nll(std::span<const double> theta, std::span<const double> x, int z, std::span<double> grad) {
  check_component(z);
  const std::size_t d = x.size();
  require_same_length(theta.size(), 2 * d, "bmm_nll theta");
  if (!grad.empty()) {
    require_same_length(grad.size(), 2 * d, "bmm_nll grad");
    std::fill(grad.begin(), grad.end(), 0.0);
    const std::size_t offset = z == 1 ? 0 : d;
    for (std::size_t j = 0; j < d; ++j) grad[offset + j] = theta[offset + j] - x[j];
  }
  return component_nll(theta, x, z);
}

double gamma_norm_gaussian(double gamma, std::size_t d, double sigma2) {
  check_gamma(gamma);
  if (d == 0) throw DimensionError("gamma_norm_gaussian: d must be positive");
  if (!(sigma2 > 0.0)) throw ConfigError("gamma_norm_gaussian: sigma2 must be positive");
  // Per dimension: (2 pi sigma2)^(-(gamma-1)/2) * gamma^(-1/2).
  const double per_dim = -0.5 * (gamma - 1.0) * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * std::log(gamma);
  return std::exp(static_cast<double>(d) * per_dim);
}

double bmm_gamma_score(std::span<const double> theta, std::span<const double> x, int z, double gamma,
                       std::span<double> grad) {
  check_gamma(gamma);
  check_component(z);
  const std::size_t d = x.size();
  require_same_length(theta.size(), 2 * d, "bmm_gamma_score theta");
  const double log_p = -component_nll(theta, x, z);
  const double score = -gamma_score_scale(gamma, d) * std::exp((gamma - 1.0) * log_p);
  if (!grad.empty()) {
    require_same_length(grad.size(), 2 * d, "bmm_gamma_score grad");
    std::fill(grad.begin(), grad.end(), 0.0);
    const std::size_t offset = z == 1 ? 0 : d;
    // d log p / d mu = x - mu
    for (std::size_t j = 0; j < d; ++j) grad[offset + j] = score * (gamma - 1.0) * (x[j] - theta[offset + j]);
  }
  return score;
}

double bmm_expected_loss(const LossSpec& spec, std::span<const double> theta, std::span<const double> x,
                         double weight_first, std::span<double> grad, double* d_weight) {
  const std::size_t dim = theta.size();
  std::vector<double> g1(grad.empty() ? 0 : dim), g2(grad.empty() ? 0 : dim);
  double l1 = 0.0, l2 = 0.0;
  switch (spec.kind()) {
    case LossKind::BmmNll:
      l1 = bmm_nll(theta, x, 1, g1);
      l2 = bmm_nll(theta, x, 2, g2);
      break;
    case LossKind::BmmGammaScore:
      l1 = bmm_gamma_score(theta, x, 1, *spec.gamma(), g1);
      l2 = bmm_gamma_score(theta, x, 2, *spec.gamma(), g2);
      break;
    default: throw ConfigError("bmm_expected_loss: " + spec.tag() + " is not a mixture loss");
  }
  if (!grad.empty()) {
    for (std::size_t j = 0; j < dim; ++j) grad[j] = weight_first * g1[j] + (1.0 - weight_first) * g2[j];
  }
  if (d_weight) *d_weight = l1 - l2;
  return weight_first * l1 + (1.0 - weight_first) * l2;
}

// ---------------------------------------------------------------------------

BlrModel::BlrModel(std::span<const BlrDatum> data) : n_(data.size()) {
  if (data.empty()) throw DimensionError("BlrModel: empty dataset");
  regressors_ = data.front().x_tilde.size();
  if (regressors_ == 0) throw DimensionError("BlrModel: no regressors");
  xtx_.assign(regressors_ * regressors_, 0.0);
  xty_.assign(regressors_, 0.0);
  for (const auto& datum : data) {
    require_same_length(datum.x_tilde.size(), regressors_, "BlrModel regressors");
    for (std::size_t a = 0; a < regressors_; ++a) {
      xty_[a] += datum.x_tilde[a] * datum.y;
      for (std::size_t b = a; b < regressors_; ++b) xtx_[a * regressors_ + b] += datum.x_tilde[a] * datum.x_tilde[b];
    }
    yty_ += datum.y * datum.y;
  }
  for (std::size_t a = 0; a < regressors_; ++a)
    for (std::size_t b = 0; b < a; ++b) xtx_[a * regressors_ + b] = xtx_[b * regressors_ + a];
}

double BlrModel::mean_loss(std::span<const double> theta, std::span<const double>, std::span<double> grad_theta,
                           std::span<double>) const {
  const std::size_t p = regressors_;
  require_same_length(theta.size(), p + 1, "BlrModel theta");
  // rss = y'y - 2 beta'X'y + beta'X'X beta
  std::vector<double> xtx_beta(p, 0.0);
  double quad = 0.0, cross = 0.0;
  for (std::size_t a = 0; a < p; ++a) {
    double acc = 0.0;
    const double* row = &xtx_[a * p];
    for (std::size_t b = 0; b < p; ++b) acc += row[b] * theta[b];
    xtx_beta[a] = acc;
    quad += theta[a] * acc;
    cross += theta[a] * xty_[a];
  }
  const double rss = std::max(yty_ - 2.0 * cross + quad, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n_);
  const double log_var = theta[p];
  const double inv_var = std::exp(-log_var);
  if (!grad_theta.empty()) {
    require_same_length(grad_theta.size(), p + 1, "BlrModel grad");
    for (std::size_t a = 0; a < p; ++a) grad_theta[a] = (xtx_beta[a] - xty_[a]) * inv_var * inv_n;
    grad_theta[p] = 0.5 - 0.5 * rss * inv_var * inv_n;
  }
  return 0.5 * (kLog2Pi + log_var) + 0.5 * rss * inv_var * inv_n;
}

BmmModel::BmmModel(std::span<const BmmDatum> data, LossSpec spec) : n_(data.size()), spec_(spec) {
  if (data.empty()) throw DimensionError("BmmModel: empty dataset");
  if (!spec_.has_latents()) throw ConfigError("BmmModel: " + spec_.tag() + " is not a mixture loss");
  d_ = data.front().x.size();
  if (d_ == 0) throw DimensionError("BmmModel: zero-dimensional observations");
  x_.reserve(n_ * d_);
  for (const auto& datum : data) {
    require_same_length(datum.x.size(), d_, "BmmModel observation");
    x_.insert(x_.end(), datum.x.begin(), datum.x.end());
  }
}

double BmmModel::mean_loss(std::span<const double> theta, std::span<const double> weights,
                           std::span<double> grad_theta, std::span<double> grad_weights) const {
  require_same_length(theta.size(), 2 * d_, "BmmModel theta");
  require_same_length(weights.size(), n_, "BmmModel latent weights");
  const bool want_grad = !grad_theta.empty();
  if (want_grad) {
    require_same_length(grad_theta.size(), 2 * d_, "BmmModel grad");
    std::fill(grad_theta.begin(), grad_theta.end(), 0.0);
  }
  if (!grad_weights.empty()) require_same_length(grad_weights.size(), n_, "BmmModel latent grad");

  const bool gamma_score = spec_.kind() == LossKind::BmmGammaScore;
  const double gamma = gamma_score ? *spec_.gamma() : 1.0;
  const double scale = gamma_score ? gamma_score_scale(gamma, d_) : 0.0;
  const double log_norm = 0.5 * static_cast<double>(d_) * kLog2Pi;
  const double inv_n = 1.0 / static_cast<double>(n_);
  const double* mu1 = theta.data();
  const double* mu2 = theta.data() + d_;

  double total = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    const double* x = &x_[i * d_];
    double sq1 = 0.0, sq2 = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      const double r1 = x[j] - mu1[j];
      const double r2 = x[j] - mu2[j];
      sq1 += r1 * r1;
      sq2 += r2 * r2;
    }
    const double w = weights[i];
    double l1, l2, c1, c2;  // c_k: d l_k / d mu_k = c_k * (mu_k - x)
    if (gamma_score) {
      l1 = -scale * std::exp((gamma - 1.0) * (-log_norm - 0.5 * sq1));
      l2 = -scale * std::exp((gamma - 1.0) * (-log_norm - 0.5 * sq2));
      c1 = -(gamma - 1.0) * l1;
      c2 = -(gamma - 1.0) * l2;
    } else {
      l1 = log_norm + 0.5 * sq1;
      l2 = log_norm + 0.5 * sq2;
      c1 = c2 = 1.0;
    }
    total += w * l1 + (1.0 - w) * l2;
    if (!grad_weights.empty()) grad_weights[i] = (l1 - l2) * inv_n;
    if (want_grad) {
      const double a1 = w * c1 * inv_n;
      const double a2 = (1.0 - w) * c2 * inv_n;
      for (std::size_t j = 0; j < d_; ++j) {
        grad_theta[j] += a1 * (mu1[j] - x[j]);
        grad_theta[d_ + j] += a2 * (mu2[j] - x[j]);
      }
    }
  }
  return total * inv_n;
}

GaussianMeanModel::GaussianMeanModel(std::span<const double> data, double sigma2) : n_(data.size()), sigma2_(sigma2) {
  if (data.empty()) throw DimensionError("GaussianMeanModel: empty dataset");
  if (!(sigma2 > 0.0)) throw ConfigError("GaussianMeanModel: sigma2 must be positive");
  for (double x : data) {
    sum_ += x;
    sum_sq_ += x * x;
  }
}

double GaussianMeanModel::mean_loss(std::span<const double> theta, std::span<const double>,
                                    std::span<double> grad_theta, std::span<double>) const {
  require_same_length(theta.size(), 1, "GaussianMeanModel theta");
  const double t = theta[0];
  const double inv_n = 1.0 / static_cast<double>(n_);
  // (1/n) sum (x_i - t)^2
  const double msq = sum_sq_ * inv_n - 2.0 * t * sum_ * inv_n + t * t;
  if (!grad_theta.empty()) grad_theta[0] = (t - sum_ * inv_n) / sigma2_;
  return 0.5 * std::log(2.0 * std::numbers::pi * sigma2_) + 0.5 * msq / sigma2_;
}

std::shared_ptr<const LossModel> make_blr_model(std::span<const BlrDatum> data, const LossSpec& spec) {
  if (spec.kind() != LossKind::BlrNll) throw ConfigError("regression data requires BlrNll, got " + spec.tag());
  return std::make_shared<BlrModel>(data);
}

std::shared_ptr<const LossModel> make_bmm_model(std::span<const BmmDatum> data, const LossSpec& spec) {
  return std::make_shared<BmmModel>(data, spec);
}

}  // namespace gvi

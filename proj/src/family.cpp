#include "gvi/family.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "gvi/error.hpp"

namespace gvi {

namespace {

const double kLogSigmaFloor = std::log(kSigmaFloor);
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw DimensionError(std::string(what) + " contains a non-finite value");
  }
}

}  // namespace

MeanFieldNormal::MeanFieldNormal(std::vector<double> mu, std::vector<double> log_sigma)
    : mu_(std::move(mu)), log_sigma_(std::move(log_sigma)) {
  if (mu_.empty()) throw DimensionError("MeanFieldNormal: dimension must be at least 1");
  require_same_length(mu_.size(), log_sigma_.size(), "MeanFieldNormal log_sigma");
  require_finite(mu_, "MeanFieldNormal mu");
  require_finite(log_sigma_, "MeanFieldNormal log_sigma");
}

MeanFieldNormal MeanFieldNormal::isotropic(std::size_t dim, double mu, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("MeanFieldNormal: sigma must be positive");
  return {std::vector<double>(dim, mu), std::vector<double>(dim, std::log(sigma))};
}

double MeanFieldNormal::sigma(std::size_t d) const {
  return std::exp(std::max(log_sigma_[d], kLogSigmaFloor));
}

double MeanFieldNormal::variance(std::size_t d) const {
  const double s = sigma(d);
  return s * s;
}

std::vector<double> MeanFieldNormal::sigmas() const {
  std::vector<double> out(dim());
  for (std::size_t d = 0; d < dim(); ++d) out[d] = sigma(d);
  return out;
}

NormalMixture::NormalMixture(std::vector<MeanFieldNormal> components, std::vector<double> logits)
    : components_(std::move(components)), logits_(std::move(logits)) {
  if (components_.empty()) throw DimensionError("NormalMixture: needs at least one component");
  require_same_length(components_.size(), logits_.size(), "NormalMixture logits");
  for (const auto& c : components_) require_same_length(c.dim(), dim(), "NormalMixture component");
  require_finite(logits_, "NormalMixture logits");
}

NormalMixture::NormalMixture(MeanFieldNormal single)
    : NormalMixture(std::vector<MeanFieldNormal>{std::move(single)}, std::vector<double>{0.0}) {}

std::vector<double> NormalMixture::weights() const { return softmax(logits_); }

double NormalMixture::log_pdf(std::span<const double> theta, std::span<double> resp) const {
  if (components_.size() == 1) {
    if (!resp.empty()) resp[0] = 1.0;
    return gvi::log_pdf(components_.front(), theta);
  }
  const std::size_t k_count = components_.size();
  std::vector<double> terms(k_count);
  const double max_logit = *std::max_element(logits_.begin(), logits_.end());
  double log_norm = 0.0;
  for (double a : logits_) log_norm += std::exp(a - max_logit);
  log_norm = max_logit + std::log(log_norm);
  for (std::size_t k = 0; k < k_count; ++k) {
    terms[k] = logits_[k] - log_norm + gvi::log_pdf(components_[k], theta);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  const double out = m + std::log(acc);
  if (!resp.empty()) {
    require_same_length(resp.size(), k_count, "NormalMixture responsibilities");
    for (std::size_t k = 0; k < k_count; ++k) resp[k] = std::exp(terms[k] - out);
  }
  return out;
}

BernoulliLatentPosterior::BernoulliLatentPosterior(std::vector<double> logit_p)
    : logit_p_(std::move(logit_p)) {
  require_finite(logit_p_, "BernoulliLatentPosterior logits");
}

BernoulliLatentPosterior BernoulliLatentPosterior::uniform(std::size_t n) {
  return BernoulliLatentPosterior(std::vector<double>(n, 0.0));
}

double BernoulliLatentPosterior::prob_first(std::size_t i) const { return sigmoid(logit_p_[i]); }

std::vector<double> BernoulliLatentPosterior::probs_first() const {
  std::vector<double> p(size());
  for (std::size_t i = 0; i < size(); ++i) p[i] = prob_first(i);
  return p;
}

std::vector<double> sample_reparam(const MeanFieldNormal& q, std::span<const double> noise) {
  require_same_length(noise.size(), q.dim(), "sample_reparam noise");
  std::vector<double> theta(q.dim());
  for (std::size_t d = 0; d < q.dim(); ++d) theta[d] = q.mu(d) + q.sigma(d) * noise[d];
  return theta;
}

double log_pdf(const MeanFieldNormal& q, std::span<const double> theta) {
  require_same_length(theta.size(), q.dim(), "log_pdf theta");
  double acc = 0.0;
  for (std::size_t d = 0; d < q.dim(); ++d) {
    const double log_s = std::max(q.log_sigma(d), kLogSigmaFloor);
    const double z = (theta[d] - q.mu(d)) * std::exp(-log_s);
    acc += -kHalfLog2Pi - log_s - 0.5 * z * z;
  }
  return acc;
}

void standard_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : out) x = normal(rng);
}

CollapseMetrics collapse_metrics(const MeanFieldNormal& q, std::span<const double> theta_star) {
  require_same_length(theta_star.size(), q.dim(), "collapse_metrics theta_star");
  CollapseMetrics out;
  out.recentered_mean.resize(q.dim());
  double sigma_sum = 0.0;
  for (std::size_t d = 0; d < q.dim(); ++d) {
    out.recentered_mean[d] = q.mu(d) - theta_star[d];
    sigma_sum += q.sigma(d);
  }
  out.mean_sigma = sigma_sum / static_cast<double>(q.dim());
  return out;
}

MeanFieldNormal moment_matched(const NormalMixture& q) {
  if (q.size() == 1) return q.component(0);
  const auto w = q.weights();
  std::vector<double> mu(q.dim(), 0.0), log_sigma(q.dim());
  for (std::size_t d = 0; d < q.dim(); ++d) {
    double m = 0.0, second = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      const auto& c = q.component(k);
      m += w[k] * c.mu(d);
      second += w[k] * (c.variance(d) + c.mu(d) * c.mu(d));
    }
    mu[d] = m;
    log_sigma[d] = 0.5 * std::log(std::max(second - m * m, kSigmaFloor * kSigmaFloor));
  }
  return {std::move(mu), std::move(log_sigma)};
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> w(logits.begin(), logits.end());
  if (w.empty()) return w;
  const double m = *std::max_element(w.begin(), w.end());
  double total = 0.0;
  for (double& x : w) {
    x = std::exp(x - m);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace gvi

#pragma once

// Variational families over the parameter vector and per-observation latent
// posteriors.

#include <cstddef>
#include <span>
#include <vector>

#include "gvi/rng.hpp"

namespace gvi {

/// Scales below this are treated as this value inside densities and divergences.
inline constexpr double kSigmaFloor = 1e-8;

/// Fully factorized normal N(mu, diag(exp(log_sigma))^2).
class MeanFieldNormal {
 public:
  MeanFieldNormal(std::vector<double> mu, std::vector<double> log_sigma);

  /// Isotropic convenience constructor: every dimension gets (mu, sigma).
  static MeanFieldNormal isotropic(std::size_t dim, double mu, double sigma);

  std::size_t dim() const { return mu_.size(); }
  std::span<const double> mu() const { return mu_; }
  std::span<const double> log_sigma() const { return log_sigma_; }
  double mu(std::size_t d) const { return mu_[d]; }
  double log_sigma(std::size_t d) const { return log_sigma_[d]; }
  /// Floored standard deviation of dimension d.
  double sigma(std::size_t d) const;
  double variance(std::size_t d) const;
  std::vector<double> sigmas() const;

  friend bool operator==(const MeanFieldNormal&, const MeanFieldNormal&) = default;

 private:
  std::vector<double> mu_;
  std::vector<double> log_sigma_;
};

/// Mixture of mean-field normals with softmax(logits) weights.
class NormalMixture {
 public:
  NormalMixture(std::vector<MeanFieldNormal> components, std::vector<double> logits);
  explicit NormalMixture(MeanFieldNormal single);

  std::size_t size() const { return components_.size(); }
  std::size_t dim() const { return components_.front().dim(); }
  const std::vector<MeanFieldNormal>& components() const { return components_; }
  const MeanFieldNormal& component(std::size_t k) const { return components_[k]; }
  std::span<const double> logits() const { return logits_; }
  std::vector<double> weights() const;

  /// log sum_k w_k N_k(theta). When resp is non-empty it receives the
  /// posterior component responsibilities r_k(theta).
  double log_pdf(std::span<const double> theta, std::span<double> resp = {}) const;

  friend bool operator==(const NormalMixture&, const NormalMixture&) = default;

 private:
  std::vector<MeanFieldNormal> components_;
  std::vector<double> logits_;
};

/// Independent Bernoulli posteriors over z_i in {1, 2}; p_i = P(z_i = 1).
class BernoulliLatentPosterior {
 public:
  explicit BernoulliLatentPosterior(std::vector<double> logit_p);
  static BernoulliLatentPosterior uniform(std::size_t n);

  std::size_t size() const { return logit_p_.size(); }
  std::span<const double> logits() const { return logit_p_; }
  double prob_first(std::size_t i) const;
  std::vector<double> probs_first() const;

  friend bool operator==(const BernoulliLatentPosterior&, const BernoulliLatentPosterior&) = default;

 private:
  std::vector<double> logit_p_;
};

/// theta = mu + sigma * noise.
std::vector<double> sample_reparam(const MeanFieldNormal& q, std::span<const double> noise);

double log_pdf(const MeanFieldNormal& q, std::span<const double> theta);

/// Fills out with independent standard normal draws.
void standard_normal(Rng& rng, std::span<double> out);

struct CollapseMetrics {
  std::vector<double> recentered_mean;
  double mean_sigma = 0.0;
};

/// Location relative to the truth and average scale of a fitted posterior.
CollapseMetrics collapse_metrics(const MeanFieldNormal& q, std::span<const double> theta_star);

/// Per-dimension mean and standard deviation of a mixture.
MeanFieldNormal moment_matched(const NormalMixture& q);

double sigmoid(double x);
std::vector<double> softmax(std::span<const double> logits);

}  // namespace gvi

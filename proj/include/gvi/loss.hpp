#pragma once

// Losses l(theta, x_i) with analytic gradients in theta, and dataset-level
// loss models that average them over observations.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gvi {

enum class LossKind {
  BlrNll,         // regression negative log-likelihood, theta = (beta, log sigma^2)
  BmmNll,         // two-component mixture NLL given the latent, theta = (mu1, mu2)
  BmmGammaScore,  // gamma-divergence score for the mixture component density
  GaussianMeanNll // 1-D location model with known variance (analytic toy)
};

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view tag);

/// Loss choice; gamma is present exactly for BmmGammaScore and exceeds 1.
class LossSpec {
 public:
  LossSpec(LossKind kind, std::optional<double> gamma = std::nullopt);

  LossKind kind() const { return kind_; }
  std::optional<double> gamma() const { return gamma_; }
  bool has_latents() const { return kind_ == LossKind::BmmNll || kind_ == LossKind::BmmGammaScore; }
  std::string tag() const;

  friend bool operator==(const LossSpec&, const LossSpec&) = default;

 private:
  LossKind kind_;
  std::optional<double> gamma_;
};

struct BlrDatum {
  double y = 0.0;
  std::vector<double> x_tilde;
};

struct BmmDatum {
  std::vector<double> x;
  int z_true = 1;             // generator-side only; never read by losses
  bool contaminated = false;  // generator-side only
};

// Per-datum losses. A non-empty grad span receives d loss / d theta
// (overwritten, not accumulated).

double blr_nll(std::span<const double> theta, const BlrDatum& datum, std::span<double> grad = {});

double bmm_nll(std::span<const double> theta, std::span<const double> x, int z, std::span<double> grad = {});

/// Integral of N(x | m, sigma2 I_d)^gamma over R^d; independent of m.
double gamma_norm_gaussian(double gamma, std::size_t d, double sigma2);

/// -gamma/(gamma-1) * p(x|theta)^(gamma-1) * I^((gamma-1)/gamma) with
/// p = N(x | mu^z, I_d).
double bmm_gamma_score(std::span<const double> theta, std::span<const double> x, int z, double gamma,
                       std::span<double> grad = {});

/// w * l(theta, x, z=1) + (1-w) * l(theta, x, z=2) for a BMM loss. grad
/// receives the theta gradient, d_weight the derivative in w.
double bmm_expected_loss(const LossSpec& spec, std::span<const double> theta, std::span<const double> x,
                         double weight_first, std::span<double> grad = {}, double* d_weight = nullptr);

/// Average loss over a fixed dataset, as seen by the objective.
class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual std::size_t theta_dim() const = 0;
  virtual std::size_t size() const = 0;
  /// Number of per-observation binary latents (0 when the loss has none).
  virtual std::size_t latent_count() const { return 0; }

  /// (1/n) sum_i E_{z_i ~ w_i}[l(theta, x_i, z_i)]. grad_theta receives the
  /// gradient of that mean; grad_weights[i] receives its derivative in w_i.
  /// Both gradient spans are overwritten and may be empty.
  virtual double mean_loss(std::span<const double> theta, std::span<const double> weights,
                           std::span<double> grad_theta, std::span<double> grad_weights) const = 0;
};

/// Linear regression NLL. Averages through sufficient statistics
/// (X^T X, X^T y, y^T y), so the cost per call does not grow with n.
class BlrModel final : public LossModel {
 public:
  explicit BlrModel(std::span<const BlrDatum> data);

  std::size_t theta_dim() const override { return regressors_ + 1; }
  std::size_t size() const override { return n_; }
  double mean_loss(std::span<const double> theta, std::span<const double> weights, std::span<double> grad_theta,
                   std::span<double> grad_weights) const override;

 private:
  std::size_t n_;
  std::size_t regressors_;
  std::vector<double> xtx_;  // row-major regressors_ x regressors_
  std::vector<double> xty_;
  double yty_ = 0.0;
};

/// Two-component mixture with one Bernoulli latent per observation.
class BmmModel final : public LossModel {
 public:
  BmmModel(std::span<const BmmDatum> data, LossSpec spec);

  std::size_t theta_dim() const override { return 2 * d_; }
  std::size_t size() const override { return n_; }
  std::size_t latent_count() const override { return n_; }
  std::size_t obs_dim() const { return d_; }
  const LossSpec& spec() const { return spec_; }
  double mean_loss(std::span<const double> theta, std::span<const double> weights, std::span<double> grad_theta,
                   std::span<double> grad_weights) const override;

 private:
  std::size_t n_;
  std::size_t d_;
  LossSpec spec_;
  std::vector<double> x_;  // row-major n_ x d_
};

/// l(theta, x) = -log N(x | theta, sigma2): the conjugate 1-D toy.
class GaussianMeanModel final : public LossModel {
 public:
  GaussianMeanModel(std::span<const double> data, double sigma2);

  std::size_t theta_dim() const override { return 1; }
  std::size_t size() const override { return n_; }
  double sigma2() const { return sigma2_; }
  double sample_mean() const { return sum_ / static_cast<double>(n_); }
  double sample_second_moment() const { return sum_sq_ / static_cast<double>(n_); }
  double mean_loss(std::span<const double> theta, std::span<const double> weights, std::span<double> grad_theta,
                   std::span<double> grad_weights) const override;

 private:
  std::size_t n_;
  double sigma2_;
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
};

std::shared_ptr<const LossModel> make_blr_model(std::span<const BlrDatum> data, const LossSpec& spec);
std::shared_ptr<const LossModel> make_bmm_model(std::span<const BmmDatum> data, const LossSpec& spec);

}  // namespace gvi

#pragma once

// The generalized variational objective
//   F(q, q^z) = E_q[(1/n) sum_i E_{q^z}[l(theta, x_i, z_i)]] + (1/n) D(q || prior)
// and its reparameterized Monte-Carlo estimator.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gvi/divergence.hpp"
#include "gvi/family.hpp"
#include "gvi/loss.hpp"

namespace gvi {

enum class FamilyKind { MeanFieldNormal, NormalMixture };

struct FamilySpec {
  FamilyKind kind = FamilyKind::MeanFieldNormal;
  std::size_t components = 1;

  static FamilySpec mean_field() { return {}; }
  static FamilySpec mixture(std::size_t k) { return {FamilyKind::NormalMixture, k}; }
  std::string tag() const;
};

/// The triplet (loss, divergence, family) together with data and prior.
class GviProblem {
 public:
  GviProblem(std::shared_ptr<const LossModel> model, DivergenceSpec divergence, MeanFieldNormal prior,
             FamilySpec family = FamilySpec::mean_field());

  const LossModel& model() const { return *model_; }
  const DivergenceSpec& divergence() const { return divergence_; }
  const MeanFieldNormal& prior() const { return prior_; }
  const FamilySpec& family() const { return family_; }
  std::size_t theta_dim() const { return prior_.dim(); }
  std::size_t n() const { return model_->size(); }
  bool has_latents() const { return model_->latent_count() > 0; }

 private:
  std::shared_ptr<const LossModel> model_;
  DivergenceSpec divergence_;
  MeanFieldNormal prior_;
  FamilySpec family_;
};

/// Variational parameters of q (a one-component mixture for the mean-field
/// family) and, when the loss has latents, of q^z.
struct VariationalParams {
  NormalMixture q;
  std::optional<BernoulliLatentPosterior> z;

  const MeanFieldNormal& mean_field() const { return q.component(0); }
  friend bool operator==(const VariationalParams&, const VariationalParams&) = default;
};

/// Number of trainable scalars. Layout of the flat vector: per component
/// (mu, log_sigma); then mixture logits (mixture family only); then latent logits.
std::size_t param_count(const GviProblem& problem);
std::vector<double> flatten(const GviProblem& problem, const VariationalParams& params);
VariationalParams unflatten(const GviProblem& problem, std::span<const double> flat);

/// mu = 0, log_sigma = 0 in every component, latent logits 0.
VariationalParams default_init(const GviProblem& problem);
/// Component means drawn from N(0, 1); scales and logits as default_init.
VariationalParams random_init(const GviProblem& problem, std::uint64_t seed);

struct ObjectiveEstimate {
  double value = 0.0;
  std::vector<double> grad;  // flat layout of param_count
  std::size_t mc_samples = 0;
  std::uint64_t seed = 0;
  double loss_term = 0.0;
  double divergence_term = 0.0;
  double std_error = 0.0;  // Monte-Carlo standard error of value
};

/// Reparameterized estimate with S draws per mixture component; latents are
/// enumerated exactly. Deterministic given seed.
ObjectiveEstimate estimate(const GviProblem& problem, const VariationalParams& params, std::size_t mc_samples,
                           std::uint64_t seed);

/// Conjugate 1-D location toy with population N(pop_mean, pop_var) and loss
/// -log N(x | theta, sigma2).
struct GaussianToy {
  double pop_mean = 0.0;
  double pop_var = 1.0;
  double sigma2 = 1.0;
  MeanFieldNormal prior = MeanFieldNormal::isotropic(1, 0.0, 10.0);
  DivergenceSpec divergence{DivergenceKind::KLD};

  /// E_mu[l(theta, x)]
  double population_loss(double theta) const;
};

struct DeterministicValue {
  double value = 0.0;
  double grad_mu = 0.0;
  double grad_log_sigma = 0.0;
};

/// E_q[E_mu[l]] + D(q || prior) / n, exactly.
DeterministicValue deterministic_objective(const GaussianToy& toy, const MeanFieldNormal& q, std::size_t n);

/// Minimizer of deterministic_objective by gradient descent with backtracking.
MeanFieldNormal minimize_deterministic_objective(const GaussianToy& toy, std::size_t n);

/// 2 |E_qbar[(1/n) sum_i l(theta, x_i) - E_mu[l(theta, x)]]|, in closed form.
double epsilon_n(const GaussianToy& toy, std::span<const double> data, const MeanFieldNormal& qbar);

}  // namespace gvi

#pragma once

// Uncertainty quantifiers D(q || pi) between fully factorized normals.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gvi/family.hpp"

namespace gvi {

enum class DivergenceKind { KLD, ReverseKLD, RenyiAlpha, AlphaDiv, Jeffreys, Fisher };

std::string_view to_string(DivergenceKind kind);
DivergenceKind parse_divergence_kind(std::string_view tag);

/// A divergence choice and its order parameter. alpha is present exactly for
/// RenyiAlpha and AlphaDiv and lies in the open interval (0, 1).
class DivergenceSpec {
 public:
  DivergenceSpec(DivergenceKind kind, std::optional<double> alpha = std::nullopt);

  DivergenceKind kind() const { return kind_; }
  std::optional<double> alpha() const { return alpha_; }
  /// "KLD", "RenyiAlpha(0.5)" ...; stable, used in seeds and CSV keys.
  std::string tag() const;

  friend bool operator==(const DivergenceSpec&, const DivergenceSpec&) = default;

 private:
  DivergenceKind kind_;
  std::optional<double> alpha_;
};

/// The six quantifiers used throughout the experiments, RD and AD at alpha = 0.5.
std::vector<DivergenceSpec> all_divergences(double alpha = 0.5);

double kld_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p);
double reverse_kld_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p);
double renyi_alpha_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p, double alpha);
double alpha_div_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p, double alpha);
double jeffreys_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p);
double fisher_mfn(const MeanFieldNormal& q, const MeanFieldNormal& p);

struct DivergenceValue {
  double value = 0.0;
  std::vector<double> grad_mu;         // d value / d mu_q
  std::vector<double> grad_log_sigma;  // d value / d log sigma_q
};

/// Closed-form value and gradient with respect to q's parameters.
DivergenceValue evaluate(const DivergenceSpec& spec, const MeanFieldNormal& q, const MeanFieldNormal& p);

/// Closed forms exist only for single-component families; anything else is
/// rejected as an unsupported pairing.
DivergenceValue evaluate(const DivergenceSpec& spec, const NormalMixture& q, const MeanFieldNormal& p);

/// Monte-Carlo estimate from samples of the relevant base measure (q, or p for
/// the reverse direction). Deterministic given seed.
double mc_divergence(const MeanFieldNormal& q, const MeanFieldNormal& p, const DivergenceSpec& spec,
                     std::size_t sample_count, std::uint64_t seed);

}  // namespace gvi

#pragma once

// Adam on reparameterized gradients of the GVI objective.

#include <cstdint>
#include <vector>

#include "gvi/objective.hpp"

namespace gvi {

struct OptimConfig {
  double learning_rate = 0.01;
  std::size_t iterations = 5000;
  std::size_t mc_samples = 100;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t trace_every = 50;
  /// Draws per component for the fresh estimate reported as final_objective.
  std::size_t final_samples = 1000;

  void validate() const;
  friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

struct TracePoint {
  std::size_t iteration = 0;
  double objective = 0.0;  // mean of the per-step estimates since the previous record
  friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

struct FitResult {
  VariationalParams params;
  std::vector<TracePoint> trace;
  double final_objective = 0.0;
  double final_std_error = 0.0;
  OptimConfig config_echo;

  const MeanFieldNormal& q() const { return params.q.component(0); }
  const std::optional<BernoulliLatentPosterior>& z_posterior() const { return params.z; }
  friend bool operator==(const FitResult&, const FitResult&) = default;
};

/// Runs config.iterations Adam steps from init. Step t draws its Monte-Carlo
/// noise from the substream (config.seed, t). Throws DivergedError on any
/// non-finite objective or gradient.
FitResult fit(const GviProblem& problem, const VariationalParams& init, const OptimConfig& config);

/// Start 0 is fit(problem, default_init(problem), config); start j > 0 uses
/// random_init and its own derived seed. Returns the lowest final_objective,
/// ties to the lowest start index.
FitResult fit_multi_start(const GviProblem& problem, std::size_t starts, const OptimConfig& config);

/// Exponential smoothing of trace objectives with the given half-life in records.
std::vector<double> smooth_trace(const std::vector<TracePoint>& trace, double half_life = 20.0);

}  // namespace gvi

#include "gvi/optim.hpp"

#include <cmath>
#include <string>

#include "gvi/error.hpp"

namespace gvi {

namespace {

constexpr std::uint64_t kFinalEvalKey = 0xf1a1ULL;
constexpr std::uint64_t kStartKey = 0x57a7ULL;

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (iterations == 0) throw ConfigError("iterations must be positive");
  if (mc_samples == 0) throw ConfigError("mc_samples must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (trace_every == 0) throw ConfigError("trace_every must be positive");
  if (final_samples == 0) throw ConfigError("final_samples must be positive");
}

FitResult fit(const GviProblem& problem, const VariationalParams& init, const OptimConfig& config) {
  config.validate();
  std::vector<double> x = flatten(problem, init);
  std::vector<double> m(x.size(), 0.0), v(x.size(), 0.0);
  FitResult result{init, {}, 0.0, 0.0, config};

  double beta1_t = 1.0, beta2_t = 1.0;
  double window_sum = 0.0;
  std::size_t window_count = 0;
  for (std::size_t t = 1; t <= config.iterations; ++t) {
    const ObjectiveEstimate est =
        estimate(problem, unflatten(problem, x), config.mc_samples, derive_seed(config.seed, {t}));
    if (!std::isfinite(est.value)) throw DivergedError("non-finite objective", t);
    if (!all_finite(est.grad)) throw DivergedError("non-finite gradient", t);

    window_sum += est.value;
    ++window_count;
    if (t % config.trace_every == 0 || t == config.iterations) {
      result.trace.push_back({t, window_sum / static_cast<double>(window_count)});
      window_sum = 0.0;
      window_count = 0;
    }

    beta1_t *= config.adam_beta1;
    beta2_t *= config.adam_beta2;
    const double lr_t = config.learning_rate * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = est.grad[i];
      m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g;
      v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g * g;
      x[i] -= lr_t * m[i] / (std::sqrt(v[i]) + config.adam_eps);
    }
    if (!all_finite(x)) throw DivergedError("non-finite parameters", t);
  }

  result.params = unflatten(problem, x);
  const ObjectiveEstimate final_est =
      estimate(problem, result.params, config.final_samples, derive_seed(config.seed, {kFinalEvalKey}));
  if (!std::isfinite(final_est.value)) throw DivergedError("non-finite final objective", config.iterations);
  result.final_objective = final_est.value;
  result.final_std_error = final_est.std_error;
  return result;
}

FitResult fit_multi_start(const GviProblem& problem, std::size_t starts, const OptimConfig& config) {
  if (starts == 0) throw ConfigError("fit_multi_start: starts must be positive");
  std::optional<FitResult> best;
  std::string failures;
  std::size_t last_iteration = 0;
  for (std::size_t j = 0; j < starts; ++j) {
    OptimConfig cfg = config;
    VariationalParams init = default_init(problem);
    if (j > 0) {
      cfg.seed = derive_seed(config.seed, {kStartKey, j});
      init = random_init(problem, derive_seed(cfg.seed, {kStartKey}));
    }
    try {
      FitResult r = fit(problem, init, cfg);
      if (!best || r.final_objective < best->final_objective) best = std::move(r);
    } catch (const DivergedError& e) {
      failures += "start " + std::to_string(j) + ": " + e.what() + "; ";
      last_iteration = e.iteration();
    }
  }
  if (!best) throw DivergedError("all starts diverged: " + failures, last_iteration);
  return std::move(*best);
}

std::vector<double> smooth_trace(const std::vector<TracePoint>& trace, double half_life) {
  std::vector<double> out;
  out.reserve(trace.size());
  const double keep = std::pow(0.5, 1.0 / half_life);
  double s = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    s = i == 0 ? trace[i].objective : keep * s + (1.0 - keep) * trace[i].objective;
    out.push_back(s);
  }
  return out;
}

}  // namespace gvi

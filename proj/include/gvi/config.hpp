#pragma once

// JSON experiment configuration. One schema serves every CLI subcommand;
// keys a subcommand does not need are ignored by it, unknown keys are errors.
//
//   {
//     "model": "BLR" | "BMM",            "d": 2,
//     "n_grid": [100, 1000],             "n": 100,
//     "divergences": ["KLD", {"kind": "RenyiAlpha", "alpha": 0.5}],
//     "divergence": "KLD",
//     "loss": "BlrNll" | {"kind": "BmmGammaScore", "gamma": 1.05},
//     "prior": {"mu": 0.0 | [...], "sigma": 10.0 | [...]},
//     "family": {"kind": "NormalMixture", "components": 2},
//     "replicates": 5, "replicate": 0, "contaminate": false, "starts": 1,
//     "seed": 0, "output_dir": "out", "workers": 1,
//     "optim": {"learning_rate": 0.01, "iterations": 5000, "mc_samples": 100,
//               "seed": 0, "adam_beta1": 0.9, "adam_beta2": 0.999,
//               "adam_eps": 1e-8, "trace_every": 50, "final_samples": 1000}
//   }

#include <filesystem>
#include <optional>
#include <string_view>

#include <json.hpp>

#include "gvi/experiment.hpp"

namespace gvi {

struct ExperimentConfig {
  SweepConfig sweep;                          // n_grid / divergences may be empty
  std::optional<std::size_t> n;               // single-problem sample size
  std::optional<DivergenceSpec> divergence;   // single-problem divergence
  std::size_t replicate = 0;                  // single-problem replicate id
};

/// Every failure is reported as ConfigError with the offending key.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

DivergenceSpec parse_divergence(const nlohmann::json& node);
LossSpec parse_loss(const nlohmann::json& node);
OptimConfig parse_optim(const nlohmann::json& node, OptimConfig base = {});

nlohmann::json to_json(const DivergenceSpec& spec);
nlohmann::json to_json(const LossSpec& spec);
nlohmann::json to_json(const OptimConfig& config);
nlohmann::json to_json(const FamilySpec& family);
nlohmann::json to_json(const MeanFieldNormal& q);

}  // namespace gvi

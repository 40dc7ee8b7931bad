// Command-line harness: generate, fit, sweep, aggregate, diagnose-epsilon, plot.
//
// Settings come from an optional JSON config (--config) with flags applied on
// top. GVI_WORKERS sets the sweep worker count unless --workers is given.
// Exit codes: 0 success, 2 configuration error, 3 numerical divergence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "gvi/config.hpp"
#include "gvi/datagen.hpp"
#include "gvi/error.hpp"
#include "gvi/experiment.hpp"
#include "gvi/optim.hpp"

namespace {

using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::string> model;
  std::optional<std::size_t> d;
  std::optional<std::uint64_t> seed;
  std::optional<bool> contaminate;
  std::optional<std::string> output_dir;
};

struct ProblemFlags {
  std::optional<std::string> loss;
  std::optional<double> gamma;
  std::optional<std::size_t> starts;
  std::optional<std::size_t> components;
  std::optional<double> learning_rate;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> mc_samples;
  std::optional<std::size_t> final_samples;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("-c,--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--model", f.model, "BLR or BMM");
  app->add_option("--d", f.d, "observation dimension (BMM)");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--contaminate", f.contaminate, "contaminate BMM data (true/false)");
  app->add_option("-o,--output-dir", f.output_dir, "output directory");
}

void add_problem(CLI::App* app, ProblemFlags& f) {
  app->add_option("--loss", f.loss, "BlrNll, BmmNll or BmmGammaScore");
  app->add_option("--gamma", f.gamma, "gamma of the gamma-score (> 1)");
  app->add_option("--starts", f.starts, "optimizer restarts");
  app->add_option("--components", f.components, "mixture components (1 = mean-field)");
  app->add_option("--lr", f.learning_rate, "Adam learning rate");
  app->add_option("--iterations", f.iterations, "Adam iterations");
  app->add_option("--mc-samples", f.mc_samples, "Monte-Carlo draws per step");
  app->add_option("--final-samples", f.final_samples, "draws for the reported final objective");
}

gvi::ExperimentConfig load(const CommonFlags& f) {
  gvi::ExperimentConfig cfg = f.config.empty() ? gvi::parse_config_text("{}") : gvi::load_config(f.config);
  auto& s = cfg.sweep;
  const bool model_changed = f.model.has_value();
  if (f.model) s.model = gvi::parse_model_kind(*f.model);
  if (f.d) s.d = *f.d;
  if (f.seed) s.seed = *f.seed;
  if (f.contaminate) s.contaminate = *f.contaminate;
  if (f.output_dir) s.output_dir = *f.output_dir;
  const bool loss_fits_model = (s.model == gvi::ModelKind::BMM) == s.loss.has_latents();
  if (model_changed && !loss_fits_model) {
    s.loss = gvi::LossSpec(s.model == gvi::ModelKind::BLR ? gvi::LossKind::BlrNll : gvi::LossKind::BmmNll);
  }
  return cfg;
}

void apply(const ProblemFlags& f, gvi::SweepConfig& s) {
  if (f.loss || f.gamma) {
    const auto kind = f.loss ? gvi::parse_loss_kind(*f.loss) : s.loss.kind();
    s.loss = gvi::LossSpec(kind, f.gamma ? f.gamma : (kind == s.loss.kind() ? s.loss.gamma() : std::nullopt));
  }
  if (f.starts) s.starts = *f.starts;
  if (f.components) s.family = *f.components <= 1 ? gvi::FamilySpec::mean_field() : gvi::FamilySpec::mixture(*f.components);
  if (f.learning_rate) s.optim.learning_rate = *f.learning_rate;
  if (f.iterations) s.optim.iterations = *f.iterations;
  if (f.mc_samples) s.optim.mc_samples = *f.mc_samples;
  if (f.final_samples) s.optim.final_samples = *f.final_samples;
  s.optim.validate();
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw gvi::ConfigError(std::string(what) + ": '" + item + "' is not a non-negative integer");
    }
  }
  return out;
}

std::optional<gvi::DivergenceSpec> divergence_flag(const std::optional<std::string>& kind,
                                                   const std::optional<double>& alpha) {
  if (!kind) {
    if (alpha) throw gvi::ConfigError("--alpha requires --divergence");
    return std::nullopt;
  }
  return gvi::DivergenceSpec(gvi::parse_divergence_kind(*kind), alpha);
}

// "KLD,RenyiAlpha(0.5),..." or "all".
std::vector<gvi::DivergenceSpec> parse_divergence_list(const std::string& text) {
  if (text == "all") return gvi::all_divergences();
  std::vector<gvi::DivergenceSpec> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto open = item.find('(');
    if (open == std::string::npos) {
      out.emplace_back(gvi::parse_divergence_kind(item));
      continue;
    }
    if (item.back() != ')') throw gvi::ConfigError("--divergences: malformed entry '" + item + "'");
    double alpha = 0.0;
    try {
      alpha = std::stod(item.substr(open + 1, item.size() - open - 2));
    } catch (const std::exception&) {
      throw gvi::ConfigError("--divergences: bad alpha in '" + item + "'");
    }
    out.emplace_back(gvi::parse_divergence_kind(item.substr(0, open)), alpha);
  }
  return out;
}

std::size_t env_workers() {
  const char* raw = std::getenv("GVI_WORKERS");
  if (!raw || !*raw) return 0;
  const auto parsed = parse_size_list(raw, "GVI_WORKERS");
  if (parsed.size() != 1 || parsed[0] == 0) throw gvi::ConfigError("GVI_WORKERS must be a positive integer");
  return parsed[0];
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw gvi::ConfigError("cannot write " + path.string());
  return out;
}

json fit_report(const gvi::SweepConfig& s, std::size_t n, const gvi::DivergenceSpec& div, std::size_t replicate,
                const gvi::FitResult& result, const std::vector<double>& theta_star) {
  json components = json::array();
  const auto weights = result.params.q.weights();
  for (std::size_t k = 0; k < result.params.q.size(); ++k) {
    json c = gvi::to_json(result.params.q.component(k));
    c["weight"] = weights[k];
    components.push_back(std::move(c));
  }
  const auto aligned = gvi::align_to_truth(s.model, s.d, result.params.q, theta_star);
  double mean_sigma = 0.0;
  for (double v : aligned.sigma) mean_sigma += v / static_cast<double>(aligned.sigma.size());
  json trace = json::array();
  for (const auto& t : result.trace) trace.push_back({t.iteration, t.objective});
  json out{{"model", std::string(gvi::to_string(s.model))},
           {"loss", gvi::to_json(s.loss)},
           {"divergence", gvi::to_json(div)},
           {"family", gvi::to_json(s.family)},
           {"n", n},
           {"replicate", replicate},
           {"components", std::move(components)},
           {"recentered_mean", aligned.recentered_mean},
           {"sigma", aligned.sigma},
           {"mean_sigma", mean_sigma},
           {"final_objective", result.final_objective},
           {"final_std_error", result.final_std_error},
           {"optim", gvi::to_json(result.config_echo)},
           {"trace", std::move(trace)}};
  if (s.model == gvi::ModelKind::BMM) out["d"] = s.d;
  if (result.params.z) out["latent_prob_first"] = result.params.z->probs_first();
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized variational inference experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // generate
  CommonFlags gen_common;
  std::optional<std::size_t> gen_n;
  std::size_t gen_replicate = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset as CSV");
  add_common(gen, gen_common);
  gen->add_option("--n", gen_n, "number of records");
  gen->add_option("--replicate", gen_replicate, "replicate id (selects the data stream)");
  gen->add_option("--out", gen_out, "output CSV (default <output-dir>/data.csv)");

  // fit
  CommonFlags fit_common;
  ProblemFlags fit_problem;
  std::optional<std::size_t> fit_n, fit_replicate;
  std::optional<std::string> fit_div;
  std::optional<double> fit_alpha;
  std::string fit_out;
  auto* fitc = app.add_subcommand("fit", "fit a single GVI problem and write a JSON report");
  add_common(fitc, fit_common);
  add_problem(fitc, fit_problem);
  fitc->add_option("--n", fit_n, "number of observations");
  fitc->add_option("--replicate", fit_replicate, "replicate id");
  fitc->add_option("--divergence", fit_div, "KLD, ReverseKLD, RenyiAlpha, AlphaDiv, Jeffreys or Fisher");
  fitc->add_option("--alpha", fit_alpha, "order of RenyiAlpha / AlphaDiv");
  fitc->add_option("--out", fit_out, "output JSON (default <output-dir>/fit.json)");

  // sweep
  CommonFlags sw_common;
  ProblemFlags sw_problem;
  std::optional<std::string> sw_grid, sw_divs;
  std::optional<std::size_t> sw_reps, sw_workers;
  auto* sw = app.add_subcommand("sweep", "run the (n, divergence, replicate) grid into <output-dir>/sweep.csv");
  add_common(sw, sw_common);
  add_problem(sw, sw_problem);
  sw->add_option("--n-grid", sw_grid, "comma-separated sample sizes");
  sw->add_option("--divergences", sw_divs, "comma-separated tags, e.g. KLD,RenyiAlpha(0.5), or all");
  sw->add_option("--replicates", sw_reps, "replicates per grid point");
  sw->add_option("--workers", sw_workers, "concurrent grid points (overrides GVI_WORKERS)");

  // aggregate
  std::string agg_in, agg_out;
  bool agg_by_dim = false;
  std::optional<std::string> agg_dims;
  auto* agg = app.add_subcommand("aggregate", "average a sweep CSV over replicates");
  agg->add_option("--in", agg_in, "sweep CSV")->required()->check(CLI::ExistingFile);
  agg->add_option("--out", agg_out, "aggregate CSV")->required();
  agg->add_flag("--by-dim", agg_by_dim, "one group per dimension");
  agg->add_option("--dims", agg_dims, "comma-separated dimensions to keep");

  // diagnose-epsilon
  CommonFlags eps_common;
  std::optional<std::string> eps_grid;
  std::optional<std::size_t> eps_reps;
  std::string eps_out;
  auto* eps = app.add_subcommand("diagnose-epsilon", "epsilon_n of the Gaussian location toy");
  add_common(eps, eps_common);
  eps->add_option("--n-grid", eps_grid, "comma-separated sample sizes");
  eps->add_option("--replicates", eps_reps, "replicates per sample size");
  eps->add_option("--out", eps_out, "output CSV (default <output-dir>/epsilon.csv)");

  // plot
  std::string plot_in, plot_kind, plot_dir;
  auto* plot = app.add_subcommand("plot", "emit plot series and an SVG from a sweep or epsilon CSV");
  plot->add_option("--in", plot_in, "input CSV")->required();
  plot->add_option("--kind", plot_kind, "collapse, robustness or epsilon")->required();
  plot->add_option("--out-dir", plot_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      const auto cfg = load(gen_common);
      const auto& s = cfg.sweep;
      const std::size_t n = gen_n ? *gen_n : cfg.n.value_or(0);
      if (n == 0) throw gvi::ConfigError("generate needs a positive --n");
      const std::uint64_t seed = gvi::data_seed(s.seed, gen_replicate);
      auto out = open_out(gen_out.empty() ? s.output_dir / "data.csv" : std::filesystem::path(gen_out));
      if (s.model == gvi::ModelKind::BLR) {
        gvi::write_blr_csv(out, gvi::generate_blr({n, seed}));
      } else {
        gvi::BmmDesign design;
        design.n = n;
        design.d = s.d;
        design.seed = seed;
        design.contaminate = s.contaminate;
        gvi::write_bmm_csv(out, gvi::generate_bmm(design));
      }
    } else if (*fitc) {
      auto cfg = load(fit_common);
      auto& s = cfg.sweep;
      apply(fit_problem, s);
      const std::size_t n = fit_n ? *fit_n : cfg.n.value_or(0);
      if (n == 0) throw gvi::ConfigError("fit needs a positive n (config 'n' or --n)");
      auto div = divergence_flag(fit_div, fit_alpha);
      if (!div) div = cfg.divergence;
      if (!div) throw gvi::ConfigError("fit needs a divergence (config 'divergence' or --divergence)");
      const std::size_t replicate = fit_replicate.value_or(cfg.replicate);
      s.n_grid = {n};
      s.divergences = {*div};
      s.validate();
      const auto grid = gvi::build_grid_problem(s, n, *div, replicate);
      gvi::OptimConfig optim = s.optim;
      optim.seed = gvi::grid_seed(s.seed, n, *div, replicate);
      const gvi::FitResult result = s.starts > 1 ? gvi::fit_multi_start(grid.problem, s.starts, optim)
                                                 : gvi::fit(grid.problem, gvi::default_init(grid.problem), optim);
      auto out = open_out(fit_out.empty() ? s.output_dir / "fit.json" : std::filesystem::path(fit_out));
      out << fit_report(s, n, *div, replicate, result, grid.theta_star).dump(2) << '\n';
    } else if (*sw) {
      auto cfg = load(sw_common);
      auto& s = cfg.sweep;
      apply(sw_problem, s);
      if (sw_grid) s.n_grid = parse_size_list(*sw_grid, "--n-grid");
      if (sw_divs) s.divergences = parse_divergence_list(*sw_divs);
      if (sw_reps) s.replicates = *sw_reps;
      if (const std::size_t env = env_workers()) s.workers = env;
      if (sw_workers) s.workers = *sw_workers;
      if (s.workers == 0) throw gvi::ConfigError("workers must be positive");
      const auto summaries = gvi::run_sweep(s);
      std::size_t failed = 0;
      for (const auto& r : summaries) failed += r.ok ? 0 : 1;
      if (failed) fmt::print(stderr, "warning: {} of {} grid points diverged\n", failed, summaries.size());
    } else if (*agg) {
      std::ifstream in(agg_in);
      const auto rows = gvi::read_sweep_csv(in);
      gvi::AggregateOptions options;
      options.by_dim = agg_by_dim;
      if (agg_dims) options.dims = parse_size_list(*agg_dims, "--dims");
      auto out = open_out(agg_out);
      gvi::write_aggregate_csv(out, gvi::aggregate(rows, options));
    } else if (*eps) {
      const auto cfg = load(eps_common);
      auto grid = cfg.sweep.n_grid;
      if (eps_grid) grid = parse_size_list(*eps_grid, "--n-grid");
      const std::size_t reps = eps_reps.value_or(cfg.sweep.replicates);
      if (grid.empty()) throw gvi::ConfigError("diagnose-epsilon needs an n grid");
      if (reps == 0) throw gvi::ConfigError("replicates must be positive");
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] == 0 || (i > 0 && grid[i] <= grid[i - 1])) {
          throw gvi::ConfigError("n grid must be positive and strictly increasing");
        }
      }
      const auto rows = gvi::epsilon_diagnostic(grid, reps, cfg.sweep.seed);
      auto out = open_out(eps_out.empty() ? cfg.sweep.output_dir / "epsilon.csv" : std::filesystem::path(eps_out));
      gvi::write_epsilon_csv(out, rows);
    } else if (*plot) {
      if (!std::filesystem::exists(plot_in)) throw gvi::ConfigError("input CSV " + plot_in + " does not exist");
      const auto result = gvi::emit_plotdata(plot_in, gvi::parse_plot_kind(plot_kind), plot_dir);
      if (result.empty_input) fmt::print(stderr, "warning: {} has no usable rows; wrote empty series\n", plot_in);
    }
  } catch (const gvi::DivergedError& e) {
    fmt::print(stderr, "error: numerical divergence: {}\n", e.what());
    return kExitDiverged;
  } catch (const std::invalid_argument& e) {  // ConfigError and DimensionError
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}

#pragma once

// Consistency and robustness sweeps over (n, divergence, replicate), their
// CSV persistence, aggregation, and plot-data emission.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gvi/datagen.hpp"
#include "gvi/divergence.hpp"
#include "gvi/loss.hpp"
#include "gvi/objective.hpp"
#include "gvi/optim.hpp"

namespace gvi {

enum class ModelKind { BLR, BMM };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view tag);

struct SweepConfig {
  ModelKind model = ModelKind::BLR;
  std::size_t d = 1;  // observation dimension (BMM only)
  std::vector<std::size_t> n_grid;
  std::vector<DivergenceSpec> divergences;
  LossSpec loss{LossKind::BlrNll};
  std::optional<MeanFieldNormal> prior;  // model default when absent
  FamilySpec family;
  std::size_t replicates = 1;
  bool contaminate = false;
  std::size_t starts = 1;
  OptimConfig optim;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  std::size_t workers = 1;

  void validate() const;
};

/// N(0, 10^2) on every coordinate for BLR; N(0, sqrt(10)^2) for BMM.
MeanFieldNormal default_prior(ModelKind model, std::size_t d);
std::size_t theta_dim(ModelKind model, std::size_t d);

struct PosteriorSummary {
  ModelKind model = ModelKind::BLR;
  LossSpec loss{LossKind::BlrNll};
  DivergenceSpec divergence{DivergenceKind::KLD};
  std::size_t n = 0;
  std::size_t replicate = 0;
  std::vector<double> recentered_mean;  // fitted mean minus truth, per dimension
  std::vector<double> sigma;            // fitted standard deviation, per dimension
  double final_objective = 0.0;
  bool ok = true;
  double wall_time_ms = 0.0;
  std::uint64_t seed = 0;

  double mean_sigma() const;
};

/// Seed of the fit at one grid point.
std::uint64_t grid_seed(std::uint64_t master, std::size_t n, const DivergenceSpec& divergence, std::size_t replicate);
/// Seed of the replicate's dataset; shared across n (datasets are nested) and divergences.
std::uint64_t data_seed(std::uint64_t master, std::size_t replicate);

struct GridProblem {
  GviProblem problem;
  std::vector<double> theta_star;  // generating parameters in the problem's theta layout
};

/// Data, loss model and prior for one grid point, without fitting.
GridProblem build_grid_problem(const SweepConfig& config, std::size_t n, const DivergenceSpec& divergence,
                               std::size_t replicate);

struct AlignedPosterior {
  std::vector<double> recentered_mean;  // moment-matched mean minus truth
  std::vector<double> sigma;            // moment-matched standard deviation
};

/// Summarizes a fitted family against theta_star. For BMM the two component
/// blocks are swapped when that ordering is closer to the truth.
AlignedPosterior align_to_truth(ModelKind model, std::size_t d, const NormalMixture& q,
                                std::span<const double> theta_star);

/// Fits one grid point and summarizes it against the generating parameters.
/// Mixture labels are matched to the truth by the closer of the two orderings.
PosteriorSummary run_grid_point(const SweepConfig& config, std::size_t n, const DivergenceSpec& divergence,
                                std::size_t replicate);

/// Runs every (n, divergence, replicate) grid point, skipping keys already in
/// output_dir/sweep.csv, and rewrites that file in grid order.
std::vector<PosteriorSummary> run_sweep(const SweepConfig& config);

// --- sweep CSV --------------------------------------------------------------

inline constexpr const char* kSweepSchema = "# gvi-sweep v1";

/// One line of the sweep CSV (one fitted dimension of one grid point).
struct SweepRow {
  std::string model, loss, gamma, divergence, alpha;
  std::size_t n = 0;
  std::size_t replicate = 0;
  std::size_t dim = 0;
  double recentered_mean = 0.0;
  double sigma = 0.0;
  double final_objective = 0.0;
  std::string status;
  double wall_time_ms = 0.0;
  std::uint64_t seed = 0;
};

std::vector<SweepRow> to_rows(const PosteriorSummary& summary);
void write_sweep_csv(std::ostream& os, const std::vector<PosteriorSummary>& summaries);
/// Throws ConfigError naming the first missing column on schema mismatch.
std::vector<SweepRow> read_sweep_csv(std::istream& is);

// --- aggregation ------------------------------------------------------------

struct AggregateOptions {
  bool by_dim = false;                     // one group per dimension
  std::optional<std::vector<std::size_t>> dims;  // restrict to these dimensions
};

struct AggregateRow {
  std::string model, loss, gamma, divergence, alpha;
  std::size_t n = 0;
  std::optional<std::size_t> dim;
  std::size_t count = 0;
  double m_bar = 0.0;      // mean recentered mean over (replicate, dim) pairs
  double s_bar = 0.0;      // mean sigma over the same pairs
  double m_std_err = 0.0;  // standard error of m_bar across those pairs
};

/// Groups by (model, loss, gamma, divergence, alpha, n[, dim]); rows whose
/// status is not "ok" are skipped and empty groups produce no row.
std::vector<AggregateRow> aggregate(const std::vector<SweepRow>& rows, const AggregateOptions& options = {});
void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows);

// --- epsilon diagnostic -----------------------------------------------------

struct EpsilonRow {
  std::size_t n = 0;
  std::size_t replicate = 0;
  double epsilon = 0.0;
};

/// Per (n, replicate): epsilon_n of the deterministic-objective minimizer on
/// the replicate's data. Datasets are nested across n.
std::vector<EpsilonRow> epsilon_diagnostic(const std::vector<std::size_t>& n_grid, std::size_t replicates,
                                           std::uint64_t seed, const GaussianToy& toy = {});
void write_epsilon_csv(std::ostream& os, const std::vector<EpsilonRow>& rows);
std::vector<EpsilonRow> read_epsilon_csv(std::istream& is);

// --- plot data --------------------------------------------------------------

enum class PlotKind { Collapse, Robustness, Epsilon };
PlotKind parse_plot_kind(std::string_view tag);
std::string_view to_string(PlotKind kind);

struct PlotOutput {
  std::filesystem::path series_csv;
  std::filesystem::path svg;
  std::size_t series = 0;
  std::size_t points = 0;
  bool empty_input = false;
};

/// Writes <kind>_series.csv and <kind>.svg into out_dir. Collapse tracks
/// dimension 0 per (loss, divergence); robustness one series per
/// (loss, divergence, dim); epsilon the median with quartile whiskers.
PlotOutput emit_plotdata(const std::filesystem::path& csv_in, PlotKind kind, const std::filesystem::path& out_dir);

}  // namespace gvi

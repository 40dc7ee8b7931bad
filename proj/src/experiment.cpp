#include "gvi/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "gvi/error.hpp"
#include "gvi/rng.hpp"

namespace gvi {

namespace {

constexpr std::uint64_t kDataKey = 0xda7aULL;

std::string num(double v) { return std::isfinite(v) ? fmt::format("{}", v) : std::string(); }

std::string opt_num(std::optional<double> v) { return v ? fmt::format("{}", *v) : std::string(); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s.empty()) return std::nan("");
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw ConfigError("CSV: cannot parse number '" + s + "'");
  }
}

std::uint64_t parse_u64(const std::string& s) {
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ConfigError("CSV: cannot parse integer '" + s + "'");
  }
}

// Reads a CSV with '#' comment lines. Returns rows as column-name lookups.
class CsvTable {
 public:
  CsvTable(std::istream& is, const std::vector<std::string>& required, const char* what) {
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      if (!have_header) {
        const auto cols = split_csv_line(line);
        for (std::size_t i = 0; i < cols.size(); ++i) index_[cols[i]] = i;
        have_header = true;
        continue;
      }
      rows_.push_back(split_csv_line(line));
    }
    if (!have_header) return;  // empty input
    for (const auto& col : required) {
      if (!index_.count(col)) throw ConfigError(std::string(what) + ": missing column '" + col + "'");
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      if (rows_[r].size() != index_.size()) {
        throw ConfigError(std::string(what) + ": row " + std::to_string(r + 1) + " has " +
                          std::to_string(rows_[r].size()) + " fields, expected " + std::to_string(index_.size()));
      }
    }
  }

  std::size_t size() const { return rows_.size(); }
  const std::string& get(std::size_t row, const std::string& col) const { return rows_[row][index_.at(col)]; }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> rows_;
};

const std::vector<std::string> kSweepColumns = {"model", "loss",   "gamma",           "divergence", "alpha",
                                                "n",     "replicate", "dim",          "recentered_mean",
                                                "sigma", "final_objective", "status", "wall_time_ms", "seed"};

using GridKey = std::tuple<std::string, std::string, std::size_t, std::size_t>;  // divergence, alpha, n, rep

GridKey key_of(const DivergenceSpec& div, std::size_t n, std::size_t rep) {
  return {std::string(to_string(div.kind())), opt_num(div.alpha()), n, rep};
}

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::string_view to_string(ModelKind kind) { return kind == ModelKind::BLR ? "BLR" : "BMM"; }

ModelKind parse_model_kind(std::string_view tag) {
  if (tag == "BLR") return ModelKind::BLR;
  if (tag == "BMM") return ModelKind::BMM;
  throw ConfigError("unknown model '" + std::string(tag) + "' (expected BLR or BMM)");
}

std::size_t theta_dim(ModelKind model, std::size_t d) {
  return model == ModelKind::BLR ? kBlrBetaTrue.size() + 1 : 2 * d;
}

MeanFieldNormal default_prior(ModelKind model, std::size_t d) {
  if (model == ModelKind::BLR) return MeanFieldNormal::isotropic(theta_dim(model, d), 0.0, 10.0);
  return MeanFieldNormal::isotropic(theta_dim(model, d), 0.0, std::sqrt(10.0));
}

void SweepConfig::validate() const {
  if (n_grid.empty()) throw ConfigError("n_grid must not be empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] == 0) throw ConfigError("n_grid entries must be positive");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ConfigError("n_grid must be strictly increasing");
  }
  if (divergences.empty()) throw ConfigError("at least one divergence is required");
  if (replicates == 0) throw ConfigError("replicates must be positive");
  if (starts == 0) throw ConfigError("starts must be positive");
  if (model == ModelKind::BMM && d == 0) throw ConfigError("d must be positive");
  if (model == ModelKind::BLR && loss.kind() != LossKind::BlrNll) throw ConfigError("BLR requires the BlrNll loss");
  if (model == ModelKind::BMM && !loss.has_latents()) throw ConfigError("BMM requires BmmNll or BmmGammaScore");
  if (prior) require_same_length(prior->dim(), theta_dim(model, d), "prior");
  optim.validate();
}

double PosteriorSummary::mean_sigma() const {
  if (sigma.empty()) return std::nan("");
  double s = 0.0;
  for (double v : sigma) s += v;
  return s / static_cast<double>(sigma.size());
}

std::uint64_t grid_seed(std::uint64_t master, std::size_t n, const DivergenceSpec& divergence, std::size_t replicate) {
  return derive_seed(master, {n, hash_tag(divergence.tag()), replicate});
}

std::uint64_t data_seed(std::uint64_t master, std::size_t replicate) {
  return derive_seed(master, {kDataKey, replicate});
}

GridProblem build_grid_problem(const SweepConfig& config, std::size_t n, const DivergenceSpec& divergence,
                               std::size_t replicate) {
  std::shared_ptr<const LossModel> model;
  std::vector<double> truth;
  if (config.model == ModelKind::BLR) {
    BlrDesign design{n, data_seed(config.seed, replicate)};
    model = make_blr_model(generate_blr(design), config.loss);
    truth = blr_theta_star(design);
  } else {
    BmmDesign design;
    design.n = n;
    design.d = config.d;
    design.seed = data_seed(config.seed, replicate);
    design.contaminate = config.contaminate;
    model = make_bmm_model(generate_bmm(design), config.loss);
    truth = bmm_theta_star(design);
  }
  return {GviProblem(model, divergence, config.prior ? *config.prior : default_prior(config.model, config.d),
                     config.family),
          std::move(truth)};
}

AlignedPosterior align_to_truth(ModelKind model, std::size_t d, const NormalMixture& q,
                                std::span<const double> theta_star) {
  const MeanFieldNormal matched = moment_matched(q);
  std::vector<double> mu(matched.mu().begin(), matched.mu().end());
  std::vector<double> sig = matched.sigmas();
  require_same_length(theta_star.size(), mu.size(), "align_to_truth theta_star");
  if (model == ModelKind::BMM) {
    // Resolve label switching against the generating means.
    double direct = 0.0, swapped = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      direct += std::pow(mu[j] - theta_star[j], 2) + std::pow(mu[d + j] - theta_star[d + j], 2);
      swapped += std::pow(mu[d + j] - theta_star[j], 2) + std::pow(mu[j] - theta_star[d + j], 2);
    }
    if (swapped < direct) {
      std::rotate(mu.begin(), mu.begin() + static_cast<std::ptrdiff_t>(d), mu.end());
      std::rotate(sig.begin(), sig.begin() + static_cast<std::ptrdiff_t>(d), sig.end());
    }
  }
  AlignedPosterior out;
  out.recentered_mean.resize(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) out.recentered_mean[j] = mu[j] - theta_star[j];
  out.sigma = std::move(sig);
  return out;
}

PosteriorSummary run_grid_point(const SweepConfig& config, std::size_t n, const DivergenceSpec& divergence,
                                std::size_t replicate) {
  const auto start = std::chrono::steady_clock::now();
  const auto [problem, truth] = build_grid_problem(config, n, divergence, replicate);

  OptimConfig optim = config.optim;
  optim.seed = grid_seed(config.seed, n, divergence, replicate);

  PosteriorSummary out;
  out.model = config.model;
  out.loss = config.loss;
  out.divergence = divergence;
  out.n = n;
  out.replicate = replicate;
  out.seed = optim.seed;
  try {
    const FitResult fitted = config.starts > 1 ? fit_multi_start(problem, config.starts, optim)
                                               : fit(problem, default_init(problem), optim);
    AlignedPosterior aligned = align_to_truth(config.model, config.d, fitted.params.q, truth);
    out.recentered_mean = std::move(aligned.recentered_mean);
    out.sigma = std::move(aligned.sigma);
    out.final_objective = fitted.final_objective;
  } catch (const DivergedError&) {
    out.ok = false;
    out.final_objective = std::nan("");
  }
  out.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<SweepRow> to_rows(const PosteriorSummary& s) {
  std::vector<SweepRow> rows;
  const std::size_t dims = s.ok ? s.recentered_mean.size() : 1;
  for (std::size_t j = 0; j < dims; ++j) {
    SweepRow r;
    r.model = std::string(to_string(s.model));
    r.loss = std::string(to_string(s.loss.kind()));
    r.gamma = opt_num(s.loss.gamma());
    r.divergence = std::string(to_string(s.divergence.kind()));
    r.alpha = opt_num(s.divergence.alpha());
    r.n = s.n;
    r.replicate = s.replicate;
    r.dim = j;
    r.recentered_mean = s.ok ? s.recentered_mean[j] : std::nan("");
    r.sigma = s.ok ? s.sigma[j] : std::nan("");
    r.final_objective = s.final_objective;
    r.status = s.ok ? "ok" : "diverged";
    r.wall_time_ms = s.wall_time_ms;
    r.seed = s.seed;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<PosteriorSummary>& summaries) {
  os << kSweepSchema << '\n';
  for (std::size_t i = 0; i < kSweepColumns.size(); ++i) os << (i ? "," : "") << kSweepColumns[i];
  os << '\n';
  for (const auto& s : summaries) {
    for (const auto& r : to_rows(s)) {
      os << r.model << ',' << r.loss << ',' << r.gamma << ',' << r.divergence << ',' << r.alpha << ',' << r.n << ','
         << r.replicate << ',' << r.dim << ',' << num(r.recentered_mean) << ',' << num(r.sigma) << ','
         << num(r.final_objective) << ',' << r.status << ',' << fmt::format("{:.3f}", r.wall_time_ms) << ','
         << r.seed << '\n';
    }
  }
}

std::vector<SweepRow> read_sweep_csv(std::istream& is) {
  const CsvTable table(is, kSweepColumns, "sweep CSV");
  std::vector<SweepRow> rows(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    SweepRow& r = rows[i];
    r.model = table.get(i, "model");
    r.loss = table.get(i, "loss");
    r.gamma = table.get(i, "gamma");
    r.divergence = table.get(i, "divergence");
    r.alpha = table.get(i, "alpha");
    r.n = parse_u64(table.get(i, "n"));
    r.replicate = parse_u64(table.get(i, "replicate"));
    r.dim = parse_u64(table.get(i, "dim"));
    r.recentered_mean = parse_double(table.get(i, "recentered_mean"));
    r.sigma = parse_double(table.get(i, "sigma"));
    r.final_objective = parse_double(table.get(i, "final_objective"));
    r.status = table.get(i, "status");
    r.wall_time_ms = parse_double(table.get(i, "wall_time_ms"));
    r.seed = parse_u64(table.get(i, "seed"));
  }
  return rows;
}

namespace {

std::vector<PosteriorSummary> summaries_from_rows(const std::vector<SweepRow>& rows) {
  std::vector<PosteriorSummary> out;
  std::map<GridKey, std::size_t> where;
  for (const auto& r : rows) {
    const GridKey key{r.divergence, r.alpha, r.n, r.replicate};
    auto it = where.find(key);
    if (it == where.end()) {
      PosteriorSummary s;
      s.model = parse_model_kind(r.model);
      s.loss = LossSpec(parse_loss_kind(r.loss), r.gamma.empty() ? std::nullopt : std::optional(parse_double(r.gamma)));
      s.divergence = DivergenceSpec(parse_divergence_kind(r.divergence),
                                    r.alpha.empty() ? std::nullopt : std::optional(parse_double(r.alpha)));
      s.n = r.n;
      s.replicate = r.replicate;
      s.final_objective = r.final_objective;
      s.ok = r.status == "ok";
      s.wall_time_ms = r.wall_time_ms;
      s.seed = r.seed;
      it = where.emplace(key, out.size()).first;
      out.push_back(std::move(s));
    }
    if (r.status == "ok") {
      out[it->second].recentered_mean.push_back(r.recentered_mean);
      out[it->second].sigma.push_back(r.sigma);
    }
  }
  return out;
}

}  // namespace

std::vector<PosteriorSummary> run_sweep(const SweepConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const auto csv_path = config.output_dir / "sweep.csv";

  std::map<GridKey, PosteriorSummary> done;
  if (std::filesystem::exists(csv_path)) {
    std::ifstream in(csv_path);
    for (auto& s : summaries_from_rows(read_sweep_csv(in))) {
      done.emplace(key_of(s.divergence, s.n, s.replicate), std::move(s));
    }
  }

  struct Job {
    std::size_t n;
    const DivergenceSpec* divergence;
    std::size_t replicate;
  };
  std::vector<Job> grid;
  for (std::size_t n : config.n_grid)
    for (const auto& div : config.divergences)
      for (std::size_t rep = 0; rep < config.replicates; ++rep) grid.push_back({n, &div, rep});

  std::vector<std::size_t> pending;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!done.count(key_of(*grid[j].divergence, grid[j].n, grid[j].replicate))) pending.push_back(j);
  }

  std::vector<std::optional<PosteriorSummary>> fresh(grid.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t p = next.fetch_add(1);
      if (p >= pending.size()) return;
      const Job& job = grid[pending[p]];
      try {
        fresh[pending[p]] = run_grid_point(config, job.n, *job.divergence, job.replicate);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(config.workers, 1), std::max<std::size_t>(pending.size(), 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<PosteriorSummary> all;
  all.reserve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (fresh[j]) {
      all.push_back(std::move(*fresh[j]));
    } else {
      all.push_back(done.at(key_of(*grid[j].divergence, grid[j].n, grid[j].replicate)));
    }
  }

  const auto tmp = csv_path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    write_sweep_csv(out, all);
  }
  std::filesystem::rename(tmp, csv_path);
  return all;
}

std::vector<AggregateRow> aggregate(const std::vector<SweepRow>& rows, const AggregateOptions& options) {
  using Key = std::tuple<std::string, std::string, std::string, std::string, std::string, std::size_t, std::size_t>;
  struct Acc {
    std::size_t count = 0;
    double m = 0.0, m2 = 0.0, s = 0.0;
  };
  std::map<Key, Acc> groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    if (options.dims && std::find(options.dims->begin(), options.dims->end(), r.dim) == options.dims->end()) continue;
    const Key key{r.model, r.loss, r.gamma, r.divergence, r.alpha, r.n, options.by_dim ? r.dim : 0};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    Acc& a = it->second;
    ++a.count;
    a.m += r.recentered_mean;
    a.m2 += r.recentered_mean * r.recentered_mean;
    a.s += r.sigma;
  }
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const Acc& a = groups.at(key);
    AggregateRow row;
    std::tie(row.model, row.loss, row.gamma, row.divergence, row.alpha, row.n) =
        std::tie(std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), std::get<4>(key),
                 std::get<5>(key));
    if (options.by_dim) row.dim = std::get<6>(key);
    const double c = static_cast<double>(a.count);
    row.count = a.count;
    row.m_bar = a.m / c;
    row.s_bar = a.s / c;
    if (a.count > 1) {
      const double var = std::max(a.m2 / c - row.m_bar * row.m_bar, 0.0) * c / (c - 1.0);
      row.m_std_err = std::sqrt(var / c);
    }
    out.push_back(std::move(row));
  }
  return out;
}

void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "model,loss,gamma,divergence,alpha,n,dim,count,m_bar,s_bar,m_std_err\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.loss << ',' << r.gamma << ',' << r.divergence << ',' << r.alpha << ',' << r.n << ','
       << (r.dim ? std::to_string(*r.dim) : std::string()) << ',' << r.count << ',' << num(r.m_bar) << ','
       << num(r.s_bar) << ',' << num(r.m_std_err) << '\n';
  }
}

std::vector<EpsilonRow> epsilon_diagnostic(const std::vector<std::size_t>& n_grid, std::size_t replicates,
                                           std::uint64_t seed, const GaussianToy& toy) {
  if (n_grid.empty()) throw ConfigError("epsilon_diagnostic: n_grid must not be empty");
  if (replicates == 0) throw ConfigError("epsilon_diagnostic: replicates must be positive");
  const std::size_t n_max = *std::max_element(n_grid.begin(), n_grid.end());
  if (std::find(n_grid.begin(), n_grid.end(), 0) != n_grid.end()) throw ConfigError("n_grid entries must be positive");

  std::vector<MeanFieldNormal> qbar;
  for (std::size_t n : n_grid) qbar.push_back(minimize_deterministic_objective(toy, n));

  std::vector<std::vector<double>> data;
  for (std::size_t rep = 0; rep < replicates; ++rep) {
    data.push_back(generate_gaussian(n_max, toy.pop_mean, toy.pop_var, data_seed(seed, rep)));
  }
  std::vector<EpsilonRow> rows;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    for (std::size_t rep = 0; rep < replicates; ++rep) {
      const std::span<const double> prefix(data[rep].data(), n_grid[g]);
      rows.push_back({n_grid[g], rep, epsilon_n(toy, prefix, qbar[g])});
    }
  }
  return rows;
}

void write_epsilon_csv(std::ostream& os, const std::vector<EpsilonRow>& rows) {
  os << "n,replicate,epsilon\n";
  for (const auto& r : rows) os << r.n << ',' << r.replicate << ',' << num(r.epsilon) << '\n';
}

std::vector<EpsilonRow> read_epsilon_csv(std::istream& is) {
  const CsvTable table(is, {"n", "replicate", "epsilon"}, "epsilon CSV");
  std::vector<EpsilonRow> rows(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    rows[i] = {parse_u64(table.get(i, "n")), parse_u64(table.get(i, "replicate")),
               parse_double(table.get(i, "epsilon"))};
  }
  return rows;
}

// ---------------------------------------------------------------------------

PlotKind parse_plot_kind(std::string_view tag) {
  if (tag == "collapse") return PlotKind::Collapse;
  if (tag == "robustness") return PlotKind::Robustness;
  if (tag == "epsilon") return PlotKind::Epsilon;
  throw ConfigError("unknown plot kind '" + std::string(tag) + "'");
}

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::Collapse: return "collapse";
    case PlotKind::Robustness: return "robustness";
    case PlotKind::Epsilon: return "epsilon";
  }
  return "?";
}

namespace {

struct SeriesPoint {
  std::size_t n;
  double center, lower, upper;
  std::size_t count;
};
using SeriesMap = std::vector<std::pair<std::string, std::vector<SeriesPoint>>>;

std::vector<SeriesPoint>& series_slot(SeriesMap& series, const std::string& name) {
  for (auto& [k, v] : series)
    if (k == name) return v;
  series.emplace_back(name, std::vector<SeriesPoint>{});
  return series.back().second;
}

std::string series_name(const AggregateRow& r) {
  std::string name = r.loss;
  if (!r.gamma.empty()) name += "(" + r.gamma + ")";
  name += "/" + r.divergence;
  if (!r.alpha.empty()) name += "(" + r.alpha + ")";
  if (r.dim) name += "/dim" + std::to_string(*r.dim);
  return name;
}

void write_svg(std::ostream& os, const SeriesMap& series, PlotKind kind) {
  constexpr double width = 720, height = 440, left = 70, right = 200, top = 30, bottom = 50;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  std::set<std::size_t> ns;
  for (const auto& [name, pts] : series) {
    for (const auto& p : pts) {
      const double lx = std::log10(static_cast<double>(p.n));
      x_lo = std::min(x_lo, lx);
      x_hi = std::max(x_hi, lx);
      y_lo = std::min(y_lo, p.lower);
      y_hi = std::max(y_hi, p.upper);
      ns.insert(p.n);
    }
  }
  if (!std::isfinite(x_lo)) {
    x_lo = 0.0;
    x_hi = 1.0;
    y_lo = -1.0;
    y_hi = 1.0;
  }
  if (x_hi - x_lo < 1e-12) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi - y_lo < 1e-12) {
    y_lo -= 1.0;
    y_hi += 1.0;
  }
  const double x_pad = 0.05 * (x_hi - x_lo);
  x_lo -= x_pad;
  x_hi += x_pad;
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  auto sx = [&](double lx) { return left + (lx - x_lo) / (x_hi - x_lo) * plot_w; };
  auto sy = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * plot_h; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

  os << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{:.0f}" height="{:.0f}" font-family="sans-serif" font-size="11">)",
                    width, height)
     << '\n';
  os << fmt::format(R"(<rect x="0" y="0" width="{:.0f}" height="{:.0f}" fill="white"/>)", width, height) << '\n';
  os << fmt::format(R"(<line class="axis" x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="black"/>)", left,
                    top + plot_h, left + plot_w, top + plot_h)
     << '\n';
  os << fmt::format(R"(<line class="axis" x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="black"/>)", left, top,
                    left, top + plot_h)
     << '\n';
  if (kind != PlotKind::Epsilon && y_lo < 0.0 && y_hi > 0.0) {
    os << fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="#999" stroke-dasharray="4 3"/>)",
                      left, sy(0.0), left + plot_w, sy(0.0))
       << '\n';
  }
  for (std::size_t n : ns) {
    const double x = sx(std::log10(static_cast<double>(n)));
    os << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" text-anchor="middle">{}</text>)", x, top + plot_h + 16, n) << '\n';
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / 4.0;
    os << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" text-anchor="end">{:.3g}</text>)", left - 6, sy(y) + 4, y) << '\n';
  }
  os << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" text-anchor="middle">n</text>)", left + plot_w / 2, height - 10)
     << '\n';
  const char* y_label = kind == PlotKind::Epsilon ? "epsilon_n (median, IQR)" : "recentered mean +/- sd";
  os << fmt::format(R"svg(<text x="14" y="{:.2f}" transform="rotate(-90 14 {:.2f})" text-anchor="middle">{}</text>)svg",
                    top + plot_h / 2, top + plot_h / 2, y_label)
     << '\n';

  const double spread = series.size() > 1 ? 14.0 : 0.0;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % std::size(palette)];
    const double offset = series.size() > 1 ? -spread / 2 + spread * s / (series.size() - 1) : 0.0;
    for (const auto& p : series[s].second) {
      const double x = sx(std::log10(static_cast<double>(p.n))) + offset;
      os << fmt::format(R"(<line class="whisker" x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="{}"/>)", x,
                        sy(p.lower), x, sy(p.upper), color)
         << '\n';
      os << fmt::format(R"(<circle class="point" cx="{:.2f}" cy="{:.2f}" r="3" fill="{}"/>)", x, sy(p.center), color)
         << '\n';
    }
    const double ly = top + 12 + 16 * static_cast<double>(s);
    os << fmt::format(R"(<rect x="{:.2f}" y="{:.2f}" width="10" height="10" fill="{}"/>)", left + plot_w + 14, ly - 9,
                      color)
       << '\n';
    os << fmt::format(R"(<text x="{:.2f}" y="{:.2f}">{}</text>)", left + plot_w + 28, ly, series[s].first) << '\n';
  }
  os << "</svg>\n";
}

}  // namespace

PlotOutput emit_plotdata(const std::filesystem::path& csv_in, PlotKind kind, const std::filesystem::path& out_dir) {
  std::ifstream in(csv_in);
  if (!in) throw ConfigError("cannot open " + csv_in.string());
  SeriesMap series;
  bool empty = false;
  if (kind == PlotKind::Epsilon) {
    const auto rows = read_epsilon_csv(in);
    empty = rows.empty();
    std::map<std::size_t, std::vector<double>> by_n;
    for (const auto& r : rows) by_n[r.n].push_back(r.epsilon);
    if (!by_n.empty()) {
      auto& pts = series_slot(series, "epsilon");
      for (const auto& [n, vals] : by_n) {
        pts.push_back({n, quantile(vals, 0.5), quantile(vals, 0.25), quantile(vals, 0.75), vals.size()});
      }
    }
  } else {
    const auto rows = read_sweep_csv(in);
    empty = rows.empty();
    AggregateOptions opts;
    if (kind == PlotKind::Collapse) {
      opts.dims = std::vector<std::size_t>{0};
    } else {
      opts.by_dim = true;
    }
    for (const auto& a : aggregate(rows, opts)) {
      series_slot(series, series_name(a)).push_back({a.n, a.m_bar, a.m_bar - a.s_bar, a.m_bar + a.s_bar, a.count});
    }
  }
  for (auto& [name, pts] : series) {
    std::stable_sort(pts.begin(), pts.end(), [](const SeriesPoint& a, const SeriesPoint& b) { return a.n < b.n; });
  }

  std::filesystem::create_directories(out_dir);
  PlotOutput out;
  out.series_csv = out_dir / (std::string(to_string(kind)) + "_series.csv");
  out.svg = out_dir / (std::string(to_string(kind)) + ".svg");
  out.empty_input = empty;
  {
    std::ofstream csv(out.series_csv, std::ios::trunc);
    csv << "series,n,center,lower,upper,count\n";
    for (const auto& [name, pts] : series) {
      for (const auto& p : pts) {
        csv << name << ',' << p.n << ',' << num(p.center) << ',' << num(p.lower) << ',' << num(p.upper) << ','
            << p.count << '\n';
        ++out.points;
      }
    }
  }
  {
    std::ofstream svg(out.svg, std::ios::trunc);
    write_svg(svg, series, kind);
  }
  out.series = series.size();
  return out;
}

}  // namespace gvi

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gvi/error.hpp"
#include "gvi/experiment.hpp"

using namespace gvi;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = GVI_GOLDEN_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gvi_test_experiment_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drops the wall-clock column so runs can be compared byte for byte.
std::string without_wall_time(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::size_t drop = std::string::npos;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') {
      out << line << '\n';
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (line.back() == ',') cells.emplace_back();
    if (drop == std::string::npos) {
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] == "wall_time_ms") drop = i;
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == drop) continue;
      out << cells[i] << ',';
    }
    out << '\n';
  }
  return out.str();
}

SweepConfig tiny_sweep(const fs::path& dir) {
  SweepConfig c;
  c.model = ModelKind::BMM;
  c.d = 1;
  c.loss = LossSpec(LossKind::BmmNll);
  c.n_grid = {20, 40};
  c.divergences = {DivergenceSpec(DivergenceKind::KLD), DivergenceSpec(DivergenceKind::RenyiAlpha, 0.5)};
  c.replicates = 2;
  c.optim.iterations = 100;
  c.optim.mc_samples = 5;
  c.optim.final_samples = 20;
  c.optim.learning_rate = 0.05;
  c.seed = 99;
  c.output_dir = dir;
  return c;
}

SweepRow make_row(std::string div, std::size_t n, std::size_t rep, std::size_t dim, double m, double s,
                  std::string status = "ok") {
  SweepRow r;
  r.model = "BLR";
  r.loss = "BlrNll";
  r.divergence = std::move(div);
  r.n = n;
  r.replicate = rep;
  r.dim = dim;
  r.recentered_mean = m;
  r.sigma = s;
  r.status = std::move(status);
  return r;
}

void check_golden(const fs::path& produced, const std::string& golden_name) {
  const fs::path golden = kGolden / golden_name;
  if (std::getenv("GVI_UPDATE_GOLDEN")) fs::copy_file(produced, golden, fs::copy_options::overwrite_existing);
  REQUIRE(fs::exists(golden));
  CHECK(slurp(produced) == slurp(golden));
}

}  // namespace

TEST_CASE("model tags and default priors") {
  CHECK(parse_model_kind("BLR") == ModelKind::BLR);
  CHECK(to_string(ModelKind::BMM) == "BMM");
  CHECK_THROWS_AS(parse_model_kind("GLM"), ConfigError);
  CHECK(theta_dim(ModelKind::BLR, 7) == 21);
  CHECK(theta_dim(ModelKind::BMM, 3) == 6);
  CHECK(default_prior(ModelKind::BLR, 1).sigma(0) == doctest::Approx(10.0));
  CHECK(default_prior(ModelKind::BMM, 2).variance(3) == doctest::Approx(10.0));
}

TEST_CASE("seeds separate grid points and share data across n and divergences") {
  const DivergenceSpec kld(DivergenceKind::KLD), rd(DivergenceKind::RenyiAlpha, 0.5);
  CHECK(grid_seed(1, 100, kld, 0) == grid_seed(1, 100, kld, 0));
  CHECK(grid_seed(1, 100, kld, 0) != grid_seed(1, 1000, kld, 0));
  CHECK(grid_seed(1, 100, kld, 0) != grid_seed(1, 100, rd, 0));
  CHECK(grid_seed(1, 100, kld, 0) != grid_seed(1, 100, kld, 1));
  CHECK(grid_seed(1, 100, rd, 0) != grid_seed(1, 100, DivergenceSpec(DivergenceKind::RenyiAlpha, 0.25), 0));
  CHECK(data_seed(1, 0) != data_seed(1, 1));
  CHECK(data_seed(1, 0) != data_seed(2, 0));

  SweepConfig c = tiny_sweep(scratch("seeds"));
  const auto small = build_grid_problem(c, 20, kld, 1);
  const auto large = build_grid_problem(c, 40, rd, 1);
  CHECK(small.problem.n() == 20);
  CHECK(large.problem.n() == 40);
  CHECK(small.theta_star == std::vector{2.0, -2.0});
  BmmDesign design;
  design.n = 20;
  design.seed = data_seed(c.seed, 1);
  const BmmModel direct(generate_bmm(design), c.loss);
  const std::vector<double> theta{1.0, -0.5}, w(20, 0.3);
  CHECK(small.problem.model().mean_loss(theta, w, {}, {}) == direct.mean_loss(theta, w, {}, {}));
}

TEST_CASE("align_to_truth resolves label switching") {
  const NormalMixture q(MeanFieldNormal({-1.9, 2.2}, {std::log(0.1), std::log(0.2)}));
  const auto a = align_to_truth(ModelKind::BMM, 1, q, std::vector{2.0, -2.0});
  CHECK(a.recentered_mean[0] == doctest::Approx(0.2));
  CHECK(a.recentered_mean[1] == doctest::Approx(0.1));
  CHECK(a.sigma[0] == doctest::Approx(0.2));
  CHECK(a.sigma[1] == doctest::Approx(0.1));

  const auto b = align_to_truth(ModelKind::BLR, 1, q, std::vector{2.0, -2.0});
  CHECK(b.recentered_mean[0] == doctest::Approx(-3.9));
  CHECK_THROWS_AS(align_to_truth(ModelKind::BLR, 1, q, std::vector{2.0}), DimensionError);
}

TEST_CASE("SweepConfig validation") {
  const SweepConfig good = tiny_sweep(scratch("validate"));
  CHECK_NOTHROW(good.validate());
  auto broken = [&](auto mutate) {
    SweepConfig c = good;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(broken([](SweepConfig& c) { c.n_grid.clear(); }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SweepConfig& c) { c.n_grid = {40, 20}; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SweepConfig& c) { c.n_grid = {0, 20}; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SweepConfig& c) { c.divergences.clear(); }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SweepConfig& c) { c.replicates = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SweepConfig& c) { c.starts = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SweepConfig& c) { c.loss = LossSpec(LossKind::BlrNll); }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SweepConfig& c) { c.prior = MeanFieldNormal::isotropic(5, 0.0, 1.0); }).validate(),
                  DimensionError);
  CHECK_THROWS_AS(broken([](SweepConfig& c) { c.optim.mc_samples = 0; }).validate(), ConfigError);
}

TEST_CASE("a sweep covers the full grid and writes one row per dimension") {
  const fs::path dir = scratch("grid");
  const SweepConfig c = tiny_sweep(dir);
  const auto all = run_sweep(c);
  CHECK(all.size() == 2 * 2 * 2);
  std::ifstream in(dir / "sweep.csv");
  const auto rows = read_sweep_csv(in);
  CHECK(rows.size() == 2 * 2 * 2 * theta_dim(c.model, c.d));
  CHECK(all[0].n == 20);
  CHECK(all.back().n == 40);
  for (const auto& s : all) {
    CHECK(s.ok);
    CHECK(s.seed == grid_seed(c.seed, s.n, s.divergence, s.replicate));
    CHECK(std::isfinite(s.final_objective));
  }
  const std::string text = slurp(dir / "sweep.csv");
  CHECK(text.rfind(std::string(kSweepSchema) + "\nmodel,loss,gamma,divergence,alpha,n,replicate,dim,recentered_mean,"
                                               "sigma,final_objective,status,wall_time_ms,seed\n",
                   0) == 0);
}

TEST_CASE("sweeps are reproducible apart from wall time, for any worker count") {
  SweepConfig a = tiny_sweep(scratch("det_a"));
  SweepConfig b = tiny_sweep(scratch("det_b"));
  b.workers = 3;
  run_sweep(a);
  run_sweep(b);
  const std::string ta = without_wall_time(slurp(a.output_dir / "sweep.csv"));
  CHECK(ta == without_wall_time(slurp(b.output_dir / "sweep.csv")));
  CHECK(ta.find("diverged") == std::string::npos);
}

TEST_CASE("a sweep resumes from the rows already on disk") {
  const fs::path dir = scratch("resume");
  const SweepConfig c = tiny_sweep(dir);
  run_sweep(c);
  const std::string full = slurp(dir / "sweep.csv");

  // Keep only the first grid point (schema, header and its two rows).
  std::istringstream in(full);
  std::ostringstream partial;
  std::string line;
  for (int i = 0; i < 4 && std::getline(in, line); ++i) partial << line << '\n';
  {
    std::ofstream out(dir / "sweep.csv", std::ios::trunc);
    out << partial.str();
  }
  const auto resumed = run_sweep(c);
  CHECK(resumed.size() == 8);
  CHECK(without_wall_time(slurp(dir / "sweep.csv")) == without_wall_time(full));

  // A row already on disk is reused verbatim rather than refitted.
  PosteriorSummary fake;
  fake.model = c.model;
  fake.loss = c.loss;
  fake.divergence = c.divergences[0];
  fake.n = 20;
  fake.replicate = 0;
  fake.recentered_mean = {123.0, 456.0};
  fake.sigma = {1.0, 1.0};
  fake.final_objective = 7.0;
  fake.seed = 5;
  {
    std::ofstream out(dir / "sweep.csv", std::ios::trunc);
    write_sweep_csv(out, {fake});
  }
  const auto again = run_sweep(c);
  CHECK(again[0].recentered_mean == std::vector{123.0, 456.0});
  CHECK(again[0].seed == 5);
  CHECK(again[1].recentered_mean != std::vector{123.0, 456.0});
}

TEST_CASE("diverged grid points are recorded, not fatal") {
  SweepConfig c = tiny_sweep(scratch("diverged"));
  c.model = ModelKind::BLR;
  c.loss = LossSpec(LossKind::BlrNll);
  c.n_grid = {30};
  c.divergences = {DivergenceSpec(DivergenceKind::KLD)};
  c.replicates = 1;
  c.optim.learning_rate = 1e4;
  c.optim.iterations = 200;
  const auto s = run_grid_point(c, 30, c.divergences[0], 0);
  CHECK_FALSE(s.ok);
  CHECK(std::isnan(s.final_objective));
  const auto rows = to_rows(s);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].status == "diverged");

  std::ostringstream os;
  write_sweep_csv(os, {s});
  std::istringstream is(os.str());
  const auto back = read_sweep_csv(is);
  REQUIRE(back.size() == 1);
  CHECK(back[0].status == "diverged");
  CHECK(std::isnan(back[0].recentered_mean));
}

TEST_CASE("sweep CSV round trip") {
  PosteriorSummary s;
  s.model = ModelKind::BMM;
  s.loss = LossSpec(LossKind::BmmGammaScore, 1.1);
  s.divergence = DivergenceSpec(DivergenceKind::AlphaDiv, 0.5);
  s.n = 1000;
  s.replicate = 3;
  s.recentered_mean = {0.1, -0.2};
  s.sigma = {0.01, 0.02};
  s.final_objective = 1.5;
  s.wall_time_ms = 12.3456;
  s.seed = 18446744073709551615ULL;
  std::ostringstream os;
  write_sweep_csv(os, {s});
  std::istringstream is(os.str());
  const auto rows = read_sweep_csv(is);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].model == "BMM");
  CHECK(rows[1].loss == "BmmGammaScore");
  CHECK(rows[1].gamma == "1.1");
  CHECK(rows[1].divergence == "AlphaDiv");
  CHECK(rows[1].alpha == "0.5");
  CHECK(rows[1].dim == 1);
  CHECK(rows[1].recentered_mean == -0.2);
  CHECK(rows[1].sigma == 0.02);
  CHECK(rows[1].seed == s.seed);
  CHECK(rows[1].wall_time_ms == doctest::Approx(12.346));
}

TEST_CASE("reading a sweep CSV reports a missing column") {
  std::istringstream is("model,loss,gamma,divergence,alpha,n,replicate,dim,recentered_mean,final_objective,status,"
                        "wall_time_ms,seed\n");
  try {
    read_sweep_csv(is);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("'sigma'") != std::string::npos);
  }
  std::istringstream ragged(std::string(kSweepSchema) +
                            "\nmodel,loss,gamma,divergence,alpha,n,replicate,dim,recentered_mean,sigma,"
                            "final_objective,status,wall_time_ms,seed\nBLR,BlrNll,,KLD\n");
  CHECK_THROWS_AS(read_sweep_csv(ragged), ConfigError);
  std::istringstream empty("");
  CHECK(read_sweep_csv(empty).empty());
}

TEST_CASE("aggregating a single row returns that row") {
  const auto out = aggregate({make_row("KLD", 100, 0, 0, 0.3, 0.7)});
  REQUIRE(out.size() == 1);
  CHECK(out[0].m_bar == 0.3);
  CHECK(out[0].s_bar == 0.7);
  CHECK(out[0].count == 1);
  CHECK(out[0].m_std_err == 0.0);
  CHECK_FALSE(out[0].dim.has_value());
}

TEST_CASE("symmetric recentered means average to zero") {
  const auto out = aggregate({make_row("KLD", 100, 0, 0, 0.45, 1.0), make_row("KLD", 100, 1, 0, -0.45, 3.0)});
  REQUIRE(out.size() == 1);
  CHECK(out[0].m_bar == 0.0);
  CHECK(out[0].s_bar == 2.0);
  CHECK(out[0].m_std_err == doctest::Approx(0.45));
}

TEST_CASE("aggregation is the mean over replicate and dimension pairs") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> nd;
  std::vector<SweepRow> rows;
  double m_sum = 0.0, s_sum = 0.0;
  for (std::size_t b = 0; b < 100; ++b) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double m = nd(rng), s = std::abs(nd(rng));
      rows.push_back(make_row("Fisher", 500, b, j, m, s));
      m_sum += m;
      s_sum += s;
    }
  }
  rows.push_back(make_row("Fisher", 500, 100, 0, std::nan(""), std::nan(""), "diverged"));
  rows.push_back(make_row("Fisher", 1000, 0, 0, 9.0, 9.0));
  const auto out = aggregate(rows);
  REQUIRE(out.size() == 2);
  CHECK(out[0].n == 500);
  CHECK(out[0].count == 300);
  CHECK(std::abs(out[0].m_bar - m_sum / 300.0) < 1e-12);
  CHECK(std::abs(out[0].s_bar - s_sum / 300.0) < 1e-12);
  CHECK(out[1].m_bar == 9.0);

  const auto per_dim = aggregate(rows, {.by_dim = true, .dims = std::nullopt});
  CHECK(per_dim.size() == 4);
  CHECK(per_dim[0].dim == 0u);
  CHECK(per_dim[0].count == 100);

  const auto only_two = aggregate(rows, {.dims = std::vector<std::size_t>{2}});
  REQUIRE(only_two.size() == 1);
  CHECK(only_two[0].count == 100);
}

TEST_CASE("groups with only diverged rows are dropped") {
  const auto out = aggregate({make_row("KLD", 100, 0, 0, std::nan(""), std::nan(""), "diverged")});
  CHECK(out.empty());
}

TEST_CASE("aggregate CSV layout") {
  std::ostringstream os;
  write_aggregate_csv(os, aggregate({make_row("KLD", 100, 0, 0, 0.5, 0.25)}, {.by_dim = true, .dims = std::nullopt}));
  CHECK(os.str() == "model,loss,gamma,divergence,alpha,n,dim,count,m_bar,s_bar,m_std_err\n"
                    "BLR,BlrNll,,KLD,,100,0,1,0.5,0.25,0\n");
}

TEST_CASE("the epsilon diagnostic is deterministic and uses nested data") {
  const std::vector<std::size_t> grid{10, 100, 1000};
  const auto a = epsilon_diagnostic(grid, 5, 3);
  const auto b = epsilon_diagnostic(grid, 5, 3);
  REQUIRE(a.size() == 15);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].epsilon == b[i].epsilon);
    CHECK(a[i].epsilon >= 0.0);
  }
  CHECK(a[0].n == 10);
  CHECK(a[14].n == 1000);
  CHECK(a[14].replicate == 4);

  const auto only_small = epsilon_diagnostic({10}, 5, 3);
  for (std::size_t r = 0; r < 5; ++r) CHECK(only_small[r].epsilon == a[r].epsilon);

  std::ostringstream os;
  write_epsilon_csv(os, a);
  std::istringstream is(os.str());
  const auto back = read_epsilon_csv(is);
  REQUIRE(back.size() == a.size());
  CHECK(back[7].epsilon == a[7].epsilon);

  CHECK_THROWS_AS(epsilon_diagnostic({}, 5, 3), ConfigError);
  CHECK_THROWS_AS(epsilon_diagnostic({10}, 0, 3), ConfigError);
  CHECK_THROWS_AS(epsilon_diagnostic({0, 10}, 1, 3), ConfigError);
}

TEST_CASE("plot kinds") {
  CHECK(parse_plot_kind("collapse") == PlotKind::Collapse);
  CHECK(parse_plot_kind("robustness") == PlotKind::Robustness);
  CHECK(to_string(PlotKind::Epsilon) == "epsilon");
  CHECK_THROWS_AS(parse_plot_kind("scatter"), ConfigError);
}

TEST_CASE("collapse plot data from a fixed sweep") {
  const fs::path out = scratch("plot_collapse");
  const auto res = emit_plotdata(kGolden / "sweep_small.csv", PlotKind::Collapse, out);
  CHECK(res.series == 2);
  CHECK(res.points == 4);
  CHECK_FALSE(res.empty_input);
  CHECK(slurp(res.series_csv) ==
        "series,n,center,lower,upper,count\n"
        "BlrNll/KLD,100,0.375,0,0.75,2\n"
        "BlrNll/KLD,1000,0.125,0,0.25,1\n"
        "BlrNll/RenyiAlpha(0.5),100,1,0.5,1.5,1\n"
        "BlrNll/RenyiAlpha(0.5),1000,0.5,0.25,0.75,1\n");
  check_golden(res.series_csv, "collapse_series.csv");
  check_golden(res.svg, "collapse.svg");
}

TEST_CASE("robustness plot data has one series per dimension") {
  const fs::path out = scratch("plot_robust");
  const auto res = emit_plotdata(kGolden / "sweep_small.csv", PlotKind::Robustness, out);
  CHECK(res.series == 4);
  check_golden(res.series_csv, "robustness_series.csv");
  check_golden(res.svg, "robustness.svg");
}

TEST_CASE("an epsilon plot with one series has one whisker per n") {
  const fs::path out = scratch("plot_eps");
  {
    std::ofstream f(out / "eps.csv");
    write_epsilon_csv(f, epsilon_diagnostic({10, 100, 1000}, 9, 1));
  }
  const auto res = emit_plotdata(out / "eps.csv", PlotKind::Epsilon, out);
  CHECK(res.series == 1);
  CHECK(res.points == 3);
  const std::string svg = slurp(res.svg);
  std::size_t whiskers = 0;
  for (std::size_t pos = 0; (pos = svg.find("class=\"whisker\"", pos)) != std::string::npos; ++pos) ++whiskers;
  CHECK(whiskers == 3);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("plotting an empty sweep yields empty outputs") {
  const fs::path out = scratch("plot_empty");
  {
    std::ofstream f(out / "empty.csv");
    f << kSweepSchema << "\nmodel,loss,gamma,divergence,alpha,n,replicate,dim,recentered_mean,sigma,"
                         "final_objective,status,wall_time_ms,seed\n";
  }
  const auto res = emit_plotdata(out / "empty.csv", PlotKind::Collapse, out);
  CHECK(res.empty_input);
  CHECK(res.series == 0);
  CHECK(slurp(res.series_csv) == "series,n,center,lower,upper,count\n");
  CHECK(fs::exists(res.svg));
}

TEST_CASE("plotting rejects a file with the wrong schema") {
  const fs::path out = scratch("plot_schema");
  {
    std::ofstream f(out / "bad.csv");
    f << "n,replicate,epsilon\n10,0,0.5\n";
  }
  CHECK_THROWS_AS(emit_plotdata(out / "bad.csv", PlotKind::Collapse, out), ConfigError);
  CHECK_THROWS_AS(emit_plotdata(out / "missing.csv", PlotKind::Collapse, out), ConfigError);
}

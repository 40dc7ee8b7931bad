#include "gvi/datagen.hpp"

#include <ostream>
#include <random>

#include <fmt/format.h>

#include "gvi/error.hpp"
#include "gvi/family.hpp"
#include "gvi/rng.hpp"

namespace gvi {

void BlrDesign::validate() const {
  if (n == 0) throw ConfigError("BlrDesign: n must be positive");
  if (!(sigma2 > 0.0)) throw ConfigError("BlrDesign: sigma2 must be positive");
}

void BmmDesign::validate() const {
  if (n == 0) throw ConfigError("BmmDesign: n must be positive");
  if (d == 0) throw ConfigError("BmmDesign: d must be positive");
  if (!(contamination_prob >= 0.0 && contamination_prob <= 1.0))
    throw ConfigError("BmmDesign: contamination_prob must lie in [0, 1]");
  if (!(contamination_sd >= 0.0)) throw ConfigError("BmmDesign: contamination_sd must be non-negative");
}

std::vector<BlrDatum> generate_blr(const BlrDesign& design) {
  design.validate();
  const double sd = std::sqrt(design.sigma2);
  std::vector<BlrDatum> out(design.n);
  for (std::size_t i = 0; i < design.n; ++i) {
    Rng rng(derive_seed(design.seed, {i}));
    BlrDatum& rec = out[i];
    rec.x_tilde.resize(kBlrBetaTrue.size());
    standard_normal(rng, rec.x_tilde);
    double eps = 0.0;
    standard_normal(rng, std::span<double>(&eps, 1));
    double fit = 0.0;
    for (std::size_t j = 0; j < kBlrBetaTrue.size(); ++j) fit += rec.x_tilde[j] * kBlrBetaTrue[j];
    rec.y = fit + sd * eps;
  }
  return out;
}

std::vector<BmmDatum> generate_bmm(const BmmDesign& design) {
  design.validate();
  std::vector<BmmDatum> out(design.n);
  for (std::size_t i = 0; i < design.n; ++i) {
    Rng rng(derive_seed(design.seed, {i}));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    BmmDatum& rec = out[i];
    rec.z_true = unif(rng) < 0.5 ? 1 : 2;
    const double centre = rec.z_true == 1 ? design.mean_offset : -design.mean_offset;
    rec.x.resize(design.d);
    standard_normal(rng, rec.x);
    for (double& v : rec.x) v += centre;
    // Always drawn, so clean and contaminated data share every other value.
    const bool hit = unif(rng) < design.contamination_prob;
    double eta = 0.0;
    standard_normal(rng, std::span<double>(&eta, 1));
    eta = design.contamination_mean + design.contamination_sd * eta;
    if (design.contaminate && hit) {
      rec.contaminated = true;
      for (double& v : rec.x) v += eta;
    }
  }
  return out;
}

std::vector<double> generate_gaussian(std::size_t n, double mean, double var, std::uint64_t seed) {
  if (n == 0) throw ConfigError("generate_gaussian: n must be positive");
  if (!(var >= 0.0)) throw ConfigError("generate_gaussian: variance must be non-negative");
  const double sd = std::sqrt(var);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i}));
    double e = 0.0;
    standard_normal(rng, std::span<double>(&e, 1));
    out[i] = mean + sd * e;
  }
  return out;
}

std::vector<double> blr_theta_star(const BlrDesign& design) {
  std::vector<double> t(kBlrBetaTrue.begin(), kBlrBetaTrue.end());
  t.push_back(std::log(design.sigma2));
  return t;
}

std::vector<double> bmm_theta_star(const BmmDesign& design) {
  std::vector<double> t(2 * design.d);
  for (std::size_t j = 0; j < design.d; ++j) {
    t[j] = design.mean_offset;
    t[design.d + j] = -design.mean_offset;
  }
  return t;
}

void write_blr_csv(std::ostream& os, const std::vector<BlrDatum>& data) {
  const std::size_t p = data.empty() ? kBlrBetaTrue.size() : data.front().x_tilde.size();
  os << "y";
  for (std::size_t j = 1; j <= p; ++j) os << ",x" << j;
  os << '\n';
  for (const auto& rec : data) {
    os << fmt::format("{}", rec.y);
    for (double v : rec.x_tilde) os << ',' << fmt::format("{}", v);
    os << '\n';
  }
}

void write_bmm_csv(std::ostream& os, const std::vector<BmmDatum>& data) {
  const std::size_t d = data.empty() ? 1 : data.front().x.size();
  os << "z_true,contaminated";
  for (std::size_t j = 1; j <= d; ++j) os << ",x" << j;
  os << '\n';
  for (const auto& rec : data) {
    os << rec.z_true << ',' << (rec.contaminated ? 1 : 0);
    for (double v : rec.x) os << ',' << fmt::format("{}", v);
    os << '\n';
  }
}

}  // namespace gvi

#pragma once

// Seeded synthetic data. Record i is drawn from its own substream
// derive_seed(seed, {i}), so a dataset of size n is a prefix of every larger
// dataset with the same seed.

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "gvi/loss.hpp"

namespace gvi {

inline constexpr std::array<double, 20> kBlrBetaTrue = {16.32, 10.15, -12.45, 2.92,  9.21,  -4.20, 5.66,
                                                        4.09,  3.04,  1.25,   7.33,  15.03, -6.65, 13.28,
                                                        5.29,  7.45,  -8.37,  4.35,  17.85, -7.80};

struct BlrDesign {
  std::size_t n = 100;
  std::uint64_t seed = 0;
  double sigma2 = 25.0;

  void validate() const;
};

struct BmmDesign {
  std::size_t n = 100;
  std::size_t d = 1;
  std::uint64_t seed = 0;
  double mean_offset = 2.0;  // components at +/- mean_offset * ones(d)
  bool contaminate = false;
  double contamination_prob = 0.05;
  double contamination_mean = 10.0;
  double contamination_sd = std::sqrt(3.0);

  void validate() const;
};

/// y = x'beta_true + e, x ~ N(0, I_20), e ~ N(0, sigma2).
std::vector<BlrDatum> generate_blr(const BlrDesign& design);

/// z ~ Bernoulli(0.5) over {1, 2}, x | z ~ N(mu^z, I_d); with contamination,
/// x += u * eta * ones(d), u ~ Bernoulli(p), eta ~ N(mean, sd).
std::vector<BmmDatum> generate_bmm(const BmmDesign& design);

/// n i.i.d. N(mean, var) draws for the location toy.
std::vector<double> generate_gaussian(std::size_t n, double mean, double var, std::uint64_t seed);

/// (beta_true, log sigma2)
std::vector<double> blr_theta_star(const BlrDesign& design = {});
/// (mu^1, mu^2) = (+offset ones, -offset ones)
std::vector<double> bmm_theta_star(const BmmDesign& design);

void write_blr_csv(std::ostream& os, const std::vector<BlrDatum>& data);
void write_bmm_csv(std::ostream& os, const std::vector<BmmDatum>& data);

}  // namespace gvi

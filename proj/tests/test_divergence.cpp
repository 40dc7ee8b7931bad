#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gvi/divergence.hpp"
#include "gvi/error.hpp"
#include "divergence_quadrature.hpp"
#include "oracles.hpp"

using namespace gvi;
using namespace gvi::oracle;

namespace {

MeanFieldNormal normal1(double mean, double sd) { return MeanFieldNormal({mean}, {std::log(sd)}); }

// The Renyi closed form with the log-normalizers written as
// Z = ln(s2) + m^2 / (2 s2) in natural parameters, term for term.
double renyi_with_full_log_variance(double mq, double sq, double mp, double sp, double alpha) {
  const double vq = sq * sq, vp = sp * sp;
  const double va = 1.0 / (alpha / vq + (1.0 - alpha) / vp);
  const double ma = alpha * mq / vq + (1.0 - alpha) * mp / vp;
  const double zq = std::log(vq) + 0.5 * mq * mq / vq;
  const double zp = std::log(vp) + 0.5 * mp * mp / vp;
  const double za = std::log(va) + 0.5 * ma * ma * va;
  return (za - alpha * zq - (1.0 - alpha) * zp) / (alpha - 1.0);
}

std::vector<double> pack(const MeanFieldNormal& q) {
  std::vector<double> x(q.mu().begin(), q.mu().end());
  x.insert(x.end(), q.log_sigma().begin(), q.log_sigma().end());
  return x;
}

MeanFieldNormal unpack(std::span<const double> x) {
  const std::size_t d = x.size() / 2;
  return MeanFieldNormal({x.begin(), x.begin() + d}, {x.begin() + d, x.end()});
}

MeanFieldNormal random_mfn(std::mt19937_64& rng, std::size_t dim) {
  std::vector<double> mu, ls;
  for (std::size_t d = 0; d < dim; ++d) {
    const auto r = oracle::random_normal(rng);
    mu.push_back(r.mean);
    ls.push_back(std::log(r.sd));
  }
  return {mu, ls};
}

}  // namespace

TEST_CASE("DivergenceSpec validation and tags") {
  CHECK(DivergenceSpec(DivergenceKind::KLD).tag() == "KLD");
  CHECK(DivergenceSpec(DivergenceKind::RenyiAlpha, 0.5).tag() == "RenyiAlpha(0.5)");
  CHECK_THROWS_AS(DivergenceSpec(DivergenceKind::RenyiAlpha), ConfigError);
  CHECK_THROWS_AS(DivergenceSpec(DivergenceKind::AlphaDiv), ConfigError);
  CHECK_THROWS_AS(DivergenceSpec(DivergenceKind::KLD, 0.5), ConfigError);
  CHECK_THROWS_AS(DivergenceSpec(DivergenceKind::RenyiAlpha, 0.0), ConfigError);
  CHECK_THROWS_AS(DivergenceSpec(DivergenceKind::RenyiAlpha, 1.0), ConfigError);
  CHECK_THROWS_AS(DivergenceSpec(DivergenceKind::AlphaDiv, -0.2), ConfigError);
  CHECK_THROWS_AS(parse_divergence_kind("Hellinger"), ConfigError);
  for (const auto& spec : all_divergences()) CHECK(parse_divergence_kind(to_string(spec.kind())) == spec.kind());
  CHECK(all_divergences().size() == 6);
}

TEST_CASE("KLD closed form") {
  const auto q = normal1(0.0, 1.0), p = normal1(1.0, 1.0);
  CHECK(kld_mfn(q, q) == 0.0);
  CHECK(kld_mfn(q, p) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::abs(kld_mfn(q, p) - quad_kld(0.0, 1.0, 1.0, 1.0)) < 1e-6);

  const MeanFieldNormal q2({0.0, -0.4}, {0.0, std::log(1.3)}), p2({1.0, 0.2}, {0.0, std::log(0.7)});
  CHECK(kld_mfn(q2, p2) == doctest::Approx(kld_mfn(normal1(0.0, 1.0), normal1(1.0, 1.0)) +
                                            kld_mfn(normal1(-0.4, 1.3), normal1(0.2, 0.7)))
                               .epsilon(1e-14));
  CHECK_THROWS_AS(kld_mfn(q2, p), DimensionError);
}

TEST_CASE("reverse KLD closed form") {
  const auto q = normal1(0.0, 2.0), p = normal1(0.0, 1.0);
  CHECK(reverse_kld_mfn(q, q) == 0.0);
  CHECK(reverse_kld_mfn(q, p) == kld_mfn(p, q));
  CHECK(std::abs(reverse_kld_mfn(q, p) - quad_kld(0.0, 1.0, 0.0, 2.0)) < 1e-6);
}

TEST_CASE("Renyi closed form") {
  const auto q = normal1(0.3, 0.8), p = normal1(0.0, 1.0);
  CHECK(std::abs(renyi_alpha_mfn(p, p, 0.5)) < 1e-14);
  CHECK(std::abs(renyi_alpha_mfn(q, p, 0.999) - kld_mfn(q, p)) < 5e-3);

  const auto q2 = normal1(1.0, 0.5), p2 = normal1(0.0, 2.0);
  CHECK(std::abs(renyi_alpha_mfn(q2, p2, 0.5) - quad_renyi(1.0, 0.5, 0.0, 2.0, 0.5)) < 1e-6);
  CHECK_THROWS_AS(renyi_alpha_mfn(q2, p2, 1.0), ConfigError);
  CHECK_THROWS_AS(renyi_alpha_mfn(q2, p2, 0.0), ConfigError);
}

TEST_CASE("the full-log-variance normalizer variant disagrees with quadrature") {
  // Documents why the implemented log-normalizer uses half the log variance:
  // the alternative is off by (1/2) ln of a variance ratio whenever scales differ.
  const double oracle_value = quad_renyi(1.0, 0.5, 0.0, 2.0, 0.5);
  const double variant = renyi_with_full_log_variance(1.0, 0.5, 0.0, 2.0, 0.5);
  CHECK(std::abs(variant - oracle_value) > 0.1);
  CHECK(std::abs(renyi_alpha_mfn(normal1(1.0, 0.5), normal1(0.0, 2.0), 0.5) - oracle_value) < 1e-6);
}

TEST_CASE("alpha divergence closed form") {
  const auto q = normal1(1.0, 1.0), p = normal1(0.0, 1.0);
  CHECK(std::abs(alpha_div_mfn(p, p, 0.5)) < 1e-14);
  CHECK(std::abs(alpha_div_mfn(q, p, 0.5) - quad_alpha_div(1.0, 1.0, 0.0, 1.0, 0.5)) < 1e-6);
  // Equal unit scales: RD = alpha * delta^2 / 2, so AD = 4 (1 - e^{-1/8}).
  CHECK(alpha_div_mfn(q, p, 0.5) == doctest::Approx(4.0 * (1.0 - std::exp(-0.125))).epsilon(1e-13));
}

TEST_CASE("AD is the exponential transform of RD to machine precision") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> alpha_dist(0.05, 0.95);
  for (int i = 0; i < 200; ++i) {
    const auto q = random_mfn(rng, 3), p = random_mfn(rng, 3);
    const double a = alpha_dist(rng);
    const double rd = renyi_alpha_mfn(q, p, a);
    const double expected = (std::exp((a - 1.0) * rd) - 1.0) / (a * (a - 1.0));
    CHECK(alpha_div_mfn(q, p, a) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("Jeffreys closed form") {
  const auto q = normal1(0.0, 1.0), p = normal1(1.0, 1.0);
  CHECK(jeffreys_mfn(q, q) == 0.0);
  CHECK(jeffreys_mfn(q, p) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(jeffreys_mfn(q, p) - (quad_kld(0, 1, 1, 1) + quad_kld(1, 1, 0, 1))) < 1e-6);
  const auto a = normal1(0.2, 0.6), b = normal1(-1.0, 1.9);
  CHECK(jeffreys_mfn(a, b) == doctest::Approx(jeffreys_mfn(b, a)).epsilon(1e-14));
  CHECK(jeffreys_mfn(a, b) == doctest::Approx(kld_mfn(a, b) + reverse_kld_mfn(a, b)).epsilon(1e-14));
}

TEST_CASE("Fisher closed form") {
  const auto q = normal1(0.0, 1.0), p = normal1(0.0, 2.0);
  CHECK(fisher_mfn(q, q) == 0.0);
  CHECK(fisher_mfn(q, p) == doctest::Approx(0.5625).epsilon(1e-14));
  CHECK(std::abs(fisher_mfn(q, p) - quad_fisher(0.0, 1.0, 0.0, 2.0)) < 1e-6);
  const MeanFieldNormal q2({0.0, 0.5}, {0.0, std::log(0.3)}), p2({0.0, -1.0}, {std::log(2.0), 0.0});
  CHECK(fisher_mfn(q2, p2) ==
        doctest::Approx(fisher_mfn(q, p) + fisher_mfn(normal1(0.5, 0.3), normal1(-1.0, 1.0))).epsilon(1e-14));
}

TEST_CASE("every closed form agrees with quadrature on random 1-D pairs") {
  std::mt19937_64 rng(99);
  for (const auto& spec : all_divergences()) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto rq = oracle::random_normal(rng), rp = oracle::random_normal(rng);
      const double closed = evaluate(spec, normal1(rq.mean, rq.sd), normal1(rp.mean, rp.sd)).value;
      worst = std::max(worst, std::abs(closed - quad_reference(spec, rq.mean, rq.sd, rp.mean, rp.sd)));
    }
    INFO(spec.tag(), " worst abs error ", worst);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("non-negativity and identity of indiscernibles") {
  std::mt19937_64 rng(3);
  for (const auto& spec : all_divergences()) {
    for (int i = 0; i < 1000; ++i) {
      const auto q = random_mfn(rng, 2), p = random_mfn(rng, 2);
      CHECK(evaluate(spec, q, p).value >= -1e-10);
      if (i < 50) CHECK(std::abs(evaluate(spec, q, q).value) < 1e-10);
    }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(123);
  for (const auto& spec : all_divergences()) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto q = random_mfn(rng, 3), p = random_mfn(rng, 3);
      const auto dv = evaluate(spec, q, p);
      std::vector<double> analytic = dv.grad_mu;
      analytic.insert(analytic.end(), dv.grad_log_sigma.begin(), dv.grad_log_sigma.end());
      const auto x = pack(q);
      const auto numeric =
          oracle::finite_gradient([&](std::span<const double> v) { return evaluate(spec, unpack(v), p).value; }, x);
      worst = std::max(worst, oracle::max_rel_err(analytic, numeric));
    }
    INFO(spec.tag(), " worst relative error ", worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gradients at symmetric points") {
  const auto q = normal1(0.4, 1.3);
  const auto kl = evaluate(DivergenceSpec(DivergenceKind::KLD), q, q);
  CHECK(kl.value == 0.0);
  CHECK(std::abs(kl.grad_mu[0]) < 1e-15);
  CHECK(std::abs(kl.grad_log_sigma[0]) < 1e-15);
  const auto fd = evaluate(DivergenceSpec(DivergenceKind::Fisher), normal1(0.0, 1.0), normal1(0.0, 2.0));
  CHECK(std::abs(fd.grad_mu[0]) < 1e-15);
}

TEST_CASE("evaluate rejects mixtures with more than one component") {
  const NormalMixture mix({normal1(0.0, 1.0), normal1(1.0, 1.0)}, {0.0, 0.0});
  CHECK_THROWS_AS(evaluate(DivergenceSpec(DivergenceKind::KLD), mix, normal1(0.0, 1.0)), ConfigError);
  const NormalMixture single(normal1(0.5, 2.0));
  CHECK(evaluate(DivergenceSpec(DivergenceKind::KLD), single, normal1(0.0, 1.0)).value ==
        kld_mfn(normal1(0.5, 2.0), normal1(0.0, 1.0)));
}

TEST_CASE("Monte-Carlo estimates") {
  const auto q = normal1(0.0, 1.0);
  for (const auto& spec : all_divergences()) {
    INFO(spec.tag());
    CHECK(std::abs(mc_divergence(q, q, spec, 10000, 8)) < 0.05);
  }
  CHECK(std::abs(mc_divergence(q, normal1(1.0, 1.0), DivergenceSpec(DivergenceKind::KLD), 1000000, 1) - 0.5) < 0.01);
  CHECK(std::abs(mc_divergence(q, normal1(0.0, 2.0), DivergenceSpec(DivergenceKind::Fisher), 1000000, 1) - 0.5625) <
        0.02);
  const auto p = normal1(0.7, 1.6);
  for (const auto& spec : all_divergences()) {
    INFO(spec.tag());
    CHECK(std::abs(mc_divergence(normal1(-0.3, 0.8), p, spec, 400000, 21) - evaluate(spec, normal1(-0.3, 0.8), p).value) <
          0.02);
  }
  const DivergenceSpec kl(DivergenceKind::KLD);
  CHECK(mc_divergence(q, p, kl, 1000, 5) == mc_divergence(q, p, kl, 1000, 5));
  CHECK(mc_divergence(q, p, kl, 1000, 5) != mc_divergence(q, p, kl, 1000, 6));
  CHECK_THROWS_AS(mc_divergence(q, p, kl, 0, 5), ConfigError);
}

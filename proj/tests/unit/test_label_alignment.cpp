#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "inconvad/label_alignment.hpp"
#include "support/oracles.hpp"

using namespace inconvad::align;

namespace {
BetaParams beta(double a, double b, double lo = 0.0, double hi = 1.0) { return {a, b, lo, hi}; }
}  // namespace

TEST_SUITE("label_alignment") {
  TEST_CASE("fit on a uniform sample recovers Beta(1,1)") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> xs(10000);
    for (auto& x : xs) x = u(rng);
    const auto p = fit_beta(xs, 0.0, 1.0);
    CHECK(p.alpha == doctest::Approx(1.0).epsilon(0.1));
    CHECK(p.beta == doctest::Approx(1.0).epsilon(0.1));
  }

  TEST_CASE("fit on three points matches the moment formulas") {
    const std::vector<double> xs{0.25, 0.5, 0.75};
    // m = 0.5, v = 1/24, m(1-m)/v - 1 = 5, so alpha = beta = 2.5.
    const auto p = fit_beta(xs, 0.0, 1.0);
    CHECK(p.alpha == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(p.beta == doctest::Approx(2.5).epsilon(1e-12));
  }

  TEST_CASE("fit rejects degenerate and out-of-range input") {
    CHECK_THROWS_AS(fit_beta(std::vector<double>{0.3, 0.3, 0.3}, 0.0, 1.0), FitError);
    CHECK_THROWS_AS(fit_beta(std::vector<double>{0.0, 1.0}, 0.0, 1.0), FitError);
    CHECK_THROWS(fit_beta(std::vector<double>{0.2, 1.5}, 0.0, 1.0));
  }

  TEST_CASE("beta_cdf examples") {
    CHECK(beta_cdf(0.5, beta(1, 1)) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(beta_cdf(0.5, beta(2, 2)) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(beta_cdf(0.25, beta(2, 2)) - 0.15625) < 1e-10);
    CHECK(beta_cdf(0.0, beta(3, 0.5)) == 0.0);
    CHECK(beta_cdf(1.0, beta(3, 0.5)) == 1.0);
  }

  TEST_CASE("beta_cdf agrees with an independent incomplete beta") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> shape(0.05, 50.0), x(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
      const double a = shape(rng), b = shape(rng), xi = x(rng);
      worst = std::max(worst, std::abs(beta_cdf(xi, beta(a, b)) - testing_support::ibeta(a, b, xi)));
    }
    CHECK(worst < 1e-10);
  }

  TEST_CASE("beta_cdf is monotone") {
    const auto p = beta(0.7, 3.2);
    double prev = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      const double c = beta_cdf(i / 1000.0, p);
      CHECK(c >= prev);
      prev = c;
    }
  }

  TEST_CASE("beta_icdf examples and round trip") {
    CHECK(beta_icdf(0.5, beta(2, 2)) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(beta_icdf(0.15625, beta(2, 2)) == doctest::Approx(0.25).epsilon(1e-8));
    CHECK(beta_icdf(0.0, beta(4, 0.3)) == 0.0);
    CHECK(beta_icdf(1.0, beta(4, 0.3)) == 1.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> shape(0.3, 20.0), x(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      const auto p = beta(shape(rng), shape(rng));
      const double u = x(rng);
      CHECK(std::abs(beta_cdf(beta_icdf(u, p), p) - u) <= 1e-8);
    }
  }

  TEST_CASE("align_label examples") {
    CHECK(align_label(0.5, beta(1, 1, 0, 1), beta(1, 1, 1, 5)) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(align_label(0.25, beta(2, 2), beta(1, 1)) == doctest::Approx(0.15625).epsilon(1e-6));
    CHECK(invert_label(3.0, beta(1, 1, 0, 1), beta(1, 1, 1, 5)) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(invert_label(0.15625, beta(2, 2), beta(1, 1)) == doctest::Approx(0.25).epsilon(1e-5));
    const auto same = beta(2.3, 0.8, -1, 7);
    for (double v = -1.0; v <= 7.0; v += 0.25) CHECK(std::abs(align_label(v, same, same) - v) < 1e-6);
  }

  TEST_CASE("align_label range errors") {
    CHECK_THROWS_AS(align_label(1.5, beta(1, 1), beta(1, 1)), RangeError);
    CHECK_THROWS_AS(invert_label(-0.1, beta(1, 1), beta(2, 2)), RangeError);
  }

  TEST_CASE("monotone, round trip and quantile preservation on random pairs") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> shape(0.5, 8.0), u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      const auto src = beta(shape(rng), shape(rng), 1.0, 5.0);
      const auto tgt = beta(shape(rng), shape(rng), 0.0, 1.0);
      double prev = -1.0, worst_trip = 0.0, worst_rank = 0.0;
      for (int i = 0; i <= 1000; ++i) {
        const double v = 1.0 + 4.0 * i / 1000.0;
        const double a = align_label(v, src, tgt);
        CHECK(a >= prev);
        prev = a;
        // Near a target endpoint one ulp of the aligned value can span a
        // visible stretch of the source scale; the round trip is held to
        // 1e-5 plus that representational slack.
        const double back = invert_label(a, src, tgt);
        double slack = 0.0;
        for (double toward : {tgt.lo, tgt.hi}) {
          const double n = std::nextafter(a, toward);
          if (n >= tgt.lo && n <= tgt.hi) slack = std::max(slack, std::abs(invert_label(n, src, tgt) - back));
        }
        worst_trip = std::max(worst_trip, std::abs(back - v) - slack);
        if (i > 0 && i < 1000)
          worst_rank = std::max(worst_rank, std::abs(beta_cdf((v - 1.0) / 4.0, src) - beta_cdf(a, tgt)));
      }
      CHECK(worst_trip < 1e-5);
      CHECK(worst_rank < 1e-6);
    }
  }

  TEST_CASE("params text round trip") {
    VadBetaParams ps{beta(1.5, 2.5, 1, 5), beta(0.5, 0.7, 0, 1), beta(3, 3, -1, 1)};
    const auto back = parse_params(format_params(ps));
    for (int k = 0; k < 3; ++k) {
      CHECK(back[k].alpha == ps[k].alpha);
      CHECK(back[k].beta == ps[k].beta);
      CHECK(back[k].lo == ps[k].lo);
      CHECK(back[k].hi == ps[k].hi);
    }
  }

  TEST_CASE("invalid params are rejected") {
    CHECK_THROWS(beta(0.0, 1.0).validate());
    CHECK_THROWS(beta(1.0, 1.0, 2.0, 1.0).validate());
  }
}

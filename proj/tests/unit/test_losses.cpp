#include <doctest.h>

#include <cmath>
#include <random>

#include "inconvad/losses.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace inconvad;
using namespace inconvad::losses;
using testing_support::check_gradients;

namespace {

GaussianVad gauss(VadVector mu, std::array<double, 3> var) {
  GaussianVad g;
  g.mu = mu;
  for (std::size_t k = 0; k < 3; ++k) g.log_var[k] = std::log(var[k]);
  return g;
}

GaussianVad random_gauss(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mu(-0.2, 1.2), lv(std::log(kVarianceFloor), 1.0);
  GaussianVad g;
  for (std::size_t k = 0; k < 3; ++k) {
    g.mu[k] = mu(rng);
    g.log_var[k] = lv(rng);
  }
  return g;
}

Matrix as_row(const VadVector& v) { return Matrix::row_vector({v.v, v.a, v.d}); }
Matrix lv_row(const GaussianVad& g) { return Matrix::row_vector({g.log_var[0], g.log_var[1], g.log_var[2]}); }

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("gaussian nll examples") {
    CHECK(gaussian_nll(gauss({0.2, 0.4, 0.6}, {1, 1, 1}), {0.2, 0.4, 0.6}) == 0.0);
    CHECK(gaussian_nll(gauss({0.3, 0.4, 0.6}, {0.04, 1, 1}), {0.5, 0.4, 0.6}) ==
          doctest::Approx(0.5 + 0.5 * std::log(0.04)).epsilon(1e-12));
    CHECK(gaussian_nll(gauss({0.3, 0.4, 0.6}, {0.04, 1, 1}), {0.5, 0.4, 0.6}) ==
          doctest::Approx(-1.10944).epsilon(1e-5));
    CHECK(gaussian_nll(gauss({0.1, 0.1, 0.1}, {2e-3, 2e-3, 2e-3}), {0.1, 0.1, 0.1}) ==
          doctest::Approx(-9.3221).epsilon(5e-5));  // quoted value is rounded loosely; exact is -9.32191
    CHECK_THROWS(gaussian_nll(gauss({0.1, 0.1, 0.1}, {1e-3, 1, 1}), {0.1, 0.1, 0.1}));
    CHECK_THROWS(gaussian_nll(gauss({NAN, 0.1, 0.1}, {1, 1, 1}), {0.1, 0.1, 0.1}));
  }

  TEST_CASE("margin loss examples") {
    const std::vector<double> a{0.1, 0.2, 0.3}, b{0.1, 0.2, 0.3};
    CHECK(margin_loss(a, b, 1, 0.9) == 0.0);
    const std::vector<double> far{1.1, 0.2, 0.3};
    CHECK(margin_loss(a, far, 0, 0.9) == 0.0);
    const std::vector<double> near{0.5, 0.2, 0.3};  // d = 0.4
    CHECK(margin_loss(a, near, 0, 0.9) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(margin_loss(a, near, 1, 0.9) == doctest::Approx(0.16).epsilon(1e-12));
    CHECK_THROWS(margin_loss(a, std::vector<double>{1.0}, 0, 0.9));
    CHECK_THROWS(margin_loss(a, b, 2, 0.9));
  }

  TEST_CASE("classifier loss examples and bookkeeping") {
    const std::vector<double> e{0.3, 0.3}, near{0.7, 0.3};
    const auto perfect = classifier_loss(0.0, 1, e, e);
    CHECK(perfect.total < 1e-6);
    const auto half = classifier_loss(0.5, 0, e, near, 0.9, 0.15);
    CHECK(half.components.at("margin") == doctest::Approx(0.25));
    CHECK(half.total == doctest::Approx(std::log(2.0) + 0.0375).epsilon(1e-12));
    CHECK(half.total == doctest::Approx(0.7307).epsilon(1e-4));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> s(4), t(4);
      for (auto& x : s) x = u(rng);
      for (auto& x : t) x = u(rng);
      const int y = static_cast<int>(rng() % 2);
      const auto lv = classifier_loss(u(rng), y, s, t, 0.9, 0.15);
      CHECK(std::abs(lv.total - (lv.components.at("bce") + 0.15 * lv.components.at("margin"))) < 1e-9);
    }
  }

  TEST_CASE("agreement target examples") {
    const auto eq = agreement_target(gauss({0.2, 0.4, 0.6}, {0.1, 0.1, 0.1}), gauss({0.4, 0.8, 0.0}, {0.1, 0.1, 0.1}));
    CHECK(eq.mu.v == doctest::Approx(0.3));
    CHECK(eq.mu.a == doctest::Approx(0.6));
    CHECK(eq.variance(0) == doctest::Approx(0.05));

    const auto t = agreement_target(gauss({0.2, 0.2, 0.2}, {0.01, 0.01, 0.01}), gauss({0.8, 0.8, 0.8}, {0.04, 0.04, 0.04}));
    CHECK(t.mu.v == doctest::Approx(0.32).epsilon(1e-12));
    CHECK(t.variance(0) == doctest::Approx(0.008).epsilon(1e-12));
    const auto [gm, gv] = testing_support::grid_product_moments(0.2, 0.01, 0.8, 0.04);
    CHECK(std::abs(gm - 0.32) < 1e-6);
    CHECK(std::abs(gv - 0.008) < 1e-6);

    const auto dom = agreement_target(gauss({0.9, 0.9, 0.9}, {2e3, 2e3, 2e3}), gauss({0.1, 0.1, 0.1}, {2e-3, 2e-3, 2e-3}));
    CHECK(std::abs(dom.mu.v - 0.1) < 1e-4);
  }

  TEST_CASE("agreement target matches grid-integrated Gaussian products") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 25; ++i) {
      const auto s = random_gauss(rng), t = random_gauss(rng);
      const auto a = agreement_target(s, t);
      for (std::size_t k = 0; k < 3; ++k) {
        const auto [m, v] = testing_support::grid_product_moments(s.mu[k], s.variance(k), t.mu[k], t.variance(k));
        CHECK(std::abs(a.mu[k] - m) < 1e-6);
        CHECK(std::abs(a.variance(k) - v) < 1e-6);
      }
    }
  }

  TEST_CASE("agreement loss examples") {
    const auto s = gauss({0.2, 0.2, 0.2}, {0.01, 0.01, 0.01});
    const auto t = gauss({0.8, 0.8, 0.8}, {0.04, 0.04, 0.04});
    const auto at_target = agreement_loss(gauss({0.32, 0.32, 0.32}, {1, 1, 1}), s, t);
    CHECK(at_target == doctest::Approx(3 * 0.5 * std::log(0.008)).epsilon(1e-10));
    CHECK(at_target / 3 == doctest::Approx(-2.4145).epsilon(2e-4));  // exact -2.41416
    double prev = at_target;
    for (double off = 0.01; off < 0.5; off += 0.01) {
      const double l = agreement_loss(gauss({0.32 + off, 0.32, 0.32}, {1, 1, 1}), s, t);
      CHECK(l > prev);
      prev = l;
    }
  }

  TEST_CASE("fusion loss cases and bookkeeping") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
      const auto f = random_gauss(rng), s = random_gauss(rng), t = random_gauss(rng);
      const VadVector y{0.1 * (i % 10), 0.5, 0.9};
      const auto zero = fusion_loss(f, y, s, t, 0.0);
      CHECK(zero.total == doctest::Approx(gaussian_nll(f, y)).epsilon(1e-12));
      const auto labeled = fusion_loss(f, y, s, t, 0.7);
      CHECK(std::abs(labeled.total - (labeled.components.at("nll") + 0.7 * labeled.components.at("agree"))) < 1e-9);
      CHECK(std::abs(labeled.total - labeled.weighted_sum()) < 1e-9);
      const auto unlabeled = fusion_loss(f, std::nullopt, s, t, 0.7);
      CHECK(unlabeled.components.count("nll") == 0);
      CHECK(unlabeled.total == doctest::Approx(0.7 * agreement_loss(f, s, t)).epsilon(1e-12));
    }
    CHECK_THROWS(fusion_loss(gauss({0.5, 0.5, 0.5}, {1, 1, 1}), std::nullopt, gauss({0.5, 0.5, 0.5}, {1, 1, 1}),
                             gauss({0.5, 0.5, 0.5}, {1, 1, 1}), 0.0));
  }

  TEST_CASE("graph losses agree with the value forms") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 20; ++i) {
      const auto p = random_gauss(rng), s = random_gauss(rng), t = random_gauss(rng);
      const VadVector y{0.2, 0.5, 0.7};
      ag::Graph g;
      auto mu = g.input(as_row(p.mu)), lv = g.input(lv_row(p));
      CHECK(graph::gaussian_nll(mu, lv, y).scalar() == doctest::Approx(gaussian_nll(p, y)).epsilon(1e-12));
      CHECK(graph::weighted_gaussian_nll(mu, lv, y, 0.0).scalar() ==
            doctest::Approx(gaussian_nll(p, y)).epsilon(1e-12));
      CHECK(graph::agreement_loss(mu, agreement_target(s, t)).scalar() ==
            doctest::Approx(agreement_loss(p, s, t)).epsilon(1e-12));
      const std::vector<double> es{p.mu.v, p.mu.a}, et{s.mu.v, s.mu.a};
      const int label = i % 2;
      LossValue parts;
      auto cl = graph::classifier_loss(g.input(Matrix::row_vector({0.3})), label, g.input(Matrix::row_vector(es)),
                                       g.input(Matrix::row_vector(et)), 0.9, 0.15, &parts);
      CHECK(cl.scalar() == doctest::Approx(classifier_loss(0.3, label, es, et).total).epsilon(1e-12));
      CHECK(std::abs(parts.total - parts.weighted_sum()) < 1e-9);
    }
  }

  TEST_CASE("weighted nll scales each term by a detached variance power") {
    const auto p = gauss({0.3, 0.4, 0.5}, {0.04, 0.2, 1.5});
    const VadVector y{0.5, 0.1, 0.9};
    ag::Graph g;
    auto mu = g.input(as_row(p.mu)), lv = g.input(lv_row(p));
    double expect = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double r = y[k] - p.mu[k];
      expect += std::pow(p.variance(k), 0.5) * (r * r / (2 * p.variance(k)) + 0.5 * p.log_var[k]);
    }
    CHECK(graph::weighted_gaussian_nll(mu, lv, y, 0.5).scalar() == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS(graph::weighted_gaussian_nll(mu, lv, y, 1.5));
  }

  TEST_CASE("loss gradients match finite differences") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
      const auto p = random_gauss(rng);
      const VadVector y{u(rng), u(rng), u(rng)};
      auto r = check_gradients(
          [&](ag::Graph&, const std::vector<ag::Var>& v) { return graph::gaussian_nll(v[0], v[1], y); },
          {as_row(p.mu), lv_row(p)});
      CHECK(r.max_rel_error < 1e-4);

      // The variance weight is detached, so only the mean path is a true gradient.
      r = check_gradients(
          [&](ag::Graph& g, const std::vector<ag::Var>& v) {
            return graph::weighted_gaussian_nll(v[0], g.constant(lv_row(p)), y, 0.5);
          },
          {as_row(p.mu)});
      CHECK(r.max_rel_error < 1e-4);

      const auto target = agreement_target(random_gauss(rng), random_gauss(rng));
      r = check_gradients([&](ag::Graph&, const std::vector<ag::Var>& v) { return graph::agreement_loss(v[0], target); },
                          {as_row(p.mu)});
      CHECK(r.max_rel_error < 1e-4);

      // Both hinge regions; points within 1e-3 of the kink are redrawn.
      for (int y_label : {0, 1}) {
        Matrix es(1, 4), et(1, 4);
        double d = 0.0;
        do {
          for (std::size_t k = 0; k < 4; ++k) {
            es[k] = u(rng) * 0.6;
            et[k] = u(rng) * 0.6;
          }
          d = 0.0;
          for (std::size_t k = 0; k < 4; ++k) d += (es[k] - et[k]) * (es[k] - et[k]);
          d = std::sqrt(d);
        } while (std::abs(d - 0.9) < 1e-3);
        r = check_gradients(
            [&](ag::Graph&, const std::vector<ag::Var>& v) { return graph::margin_loss(v[0], v[1], y_label, 0.9); },
            {es, et});
        CHECK(r.max_rel_error < 1e-4);
        const Matrix p_inc = Matrix::row_vector({0.05 + 0.9 * u(rng)});
        r = check_gradients(
            [&](ag::Graph&, const std::vector<ag::Var>& v) {
              return graph::classifier_loss(v[0], y_label, v[1], v[2], 0.9, 0.15);
            },
            {p_inc, es, et});
        CHECK(r.max_rel_error < 1e-4);
      }
    }
  }

  TEST_CASE("fusion graph loss bookkeeping") {
    ag::Graph g;
    nn::HeteroscedasticHead::Output fused{g.input(Matrix::row_vector({0.2, 0.5, 0.8})),
                                          g.input(Matrix::row_vector({-1.0, -2.0, -0.5}))};
    const auto target = agreement_target(gauss({0.3, 0.3, 0.3}, {0.1, 0.1, 0.1}), gauss({0.6, 0.6, 0.6}, {0.2, 0.2, 0.2}));
    LossValue parts;
    const auto total = graph::fusion_loss(fused, VadVector{0.1, 0.2, 0.3}, target, 0.5, &parts);
    CHECK(std::abs(total.scalar() - parts.weighted_sum()) < 1e-9);
    CHECK(std::abs(total.scalar() - (parts.components.at("nll") + 0.5 * parts.components.at("agree"))) < 1e-9);
    CHECK_THROWS(graph::fusion_loss(fused, std::nullopt, target, 0.0));
  }
}

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "inconvad/kernels.hpp"

using namespace inconvad;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

bool have_avx2() { return kernels::detect_isa() == kernels::Isa::avx2; }

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol * (1.0 + std::abs(a[i])));
}

// Reference product written without any blocking.
std::vector<double> naive_gemm(std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a,
                               const std::vector<double>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("scalar gemm matches a naive triple loop, plain and transposed") {
    std::mt19937_64 rng(1);
    for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 17, 5}, {8, 33, 19}, {5, 4, 70}}) {
      const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
      const auto ref = naive_gemm(m, n, k, a, b);
      std::vector<double> c(m * n, 0.0);
      kernels::scalar::gemm(m, n, k, a.data(), k, 1, b.data(), n, c.data(), n);
      check_close(ref, c, 1e-13);

      // Same product with A stored transposed (k x m).
      std::vector<double> at(k * m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
      std::fill(c.begin(), c.end(), 0.0);
      kernels::scalar::gemm(m, n, k, at.data(), 1, m, b.data(), n, c.data(), n);
      check_close(ref, c, 1e-13);

      // A B^T with B^T stored n x k.
      std::vector<double> bt(n * k);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
      std::fill(c.begin(), c.end(), 0.0);
      kernels::scalar::gemm_nt(m, n, k, a.data(), k, bt.data(), k, c.data(), n);
      check_close(ref, c, 1e-13);
    }
  }

  TEST_CASE("gemm skips zero weights so non-finite rows stay contained") {
    const std::vector<double> a{1.0, 0.0};
    const std::vector<double> b{2.0, 3.0, std::numeric_limits<double>::quiet_NaN(),
                                std::numeric_limits<double>::infinity()};
    std::vector<double> c(2, 0.0);
    kernels::gemm(1, 2, 2, a.data(), 2, 1, b.data(), 2, c.data(), 2);
    CHECK(c[0] == 2.0);
    CHECK(c[1] == 3.0);
  }

  TEST_CASE("vectorized kernels match the scalar reference") {
    if (!have_avx2()) {
      MESSAGE("CPU lacks AVX2; equivalence not exercised");
      return;
    }
    std::mt19937_64 rng(2);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u, 400u, 1023u}) {
      const auto x = random_vec(n, rng), y = random_vec(n, rng);
      CHECK(kernels::avx2::dot(x.data(), y.data(), n) ==
            doctest::Approx(kernels::scalar::dot(x.data(), y.data(), n)).epsilon(1e-12));
      CHECK(kernels::avx2::sum_squares(x.data(), n) ==
            doctest::Approx(kernels::scalar::sum_squares(x.data(), n)).epsilon(1e-12));
      auto y1 = y, y2 = y;
      kernels::scalar::axpy(0.7, x.data(), y1.data(), n);
      kernels::avx2::axpy(0.7, x.data(), y2.data(), n);
      check_close(y1, y2, 1e-15);
    }
    for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {2, 15, 3}, {7, 16, 9}, {4, 37, 21}, {9, 96, 64}}) {
      const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), c0 = random_vec(m * n, rng);
      auto c1 = c0, c2 = c0;
      kernels::scalar::gemm(m, n, k, a.data(), k, 1, b.data(), n, c1.data(), n);
      kernels::avx2::gemm(m, n, k, a.data(), k, 1, b.data(), n, c2.data(), n);
      check_close(c1, c2, 1e-13);
      const auto bt = random_vec(n * k, rng);
      c1 = c0;
      c2 = c0;
      kernels::scalar::gemm_nt(m, n, k, a.data(), k, bt.data(), k, c1.data(), n);
      kernels::avx2::gemm_nt(m, n, k, a.data(), k, bt.data(), k, c2.data(), n);
      check_close(c1, c2, 1e-13);
    }
  }

  TEST_CASE("dispatch can be pinned") {
    const auto before = kernels::active_isa();
    kernels::set_isa(kernels::Isa::scalar);
    CHECK(kernels::active_isa() == kernels::Isa::scalar);
    CHECK(kernels::isa_name(kernels::Isa::scalar) == "scalar");
    const std::vector<double> x{1.0, 2.0, 3.0};
    CHECK(kernels::dot(x, x) == 14.0);
    CHECK(kernels::sum_squares(x) == 14.0);
    if (!have_avx2()) CHECK_THROWS_AS(kernels::set_isa(kernels::Isa::avx2), std::invalid_argument);
    kernels::set_isa(before);
  }
}

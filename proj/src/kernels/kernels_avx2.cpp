#include "inconvad/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace inconvad::kernels::avx2 {

namespace {
inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}
}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_row, std::size_t a_col,
          const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * a_row;
    double* ci = c + i * ldc;
    std::size_t j = 0;
    // 16-column register block kept in accumulators across the k loop.
    for (; j + 16 <= n; j += 16) {
      __m256d c0 = _mm256_loadu_pd(ci + j);
      __m256d c1 = _mm256_loadu_pd(ci + j + 4);
      __m256d c2 = _mm256_loadu_pd(ci + j + 8);
      __m256d c3 = _mm256_loadu_pd(ci + j + 12);
      for (std::size_t p = 0; p < k; ++p) {
        const double s = ai[p * a_col];
        if (s == 0.0) continue;
        const __m256d vs = _mm256_set1_pd(s);
        const double* bp = b + p * ldb + j;
        c0 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(bp), c0);
        c1 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(bp + 4), c1);
        c2 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(bp + 8), c2);
        c3 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(bp + 12), c3);
      }
      _mm256_storeu_pd(ci + j, c0);
      _mm256_storeu_pd(ci + j + 4, c1);
      _mm256_storeu_pd(ci + j + 8, c2);
      _mm256_storeu_pd(ci + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = _mm256_loadu_pd(ci + j);
      for (std::size_t p = 0; p < k; ++p) {
        const double s = ai[p * a_col];
        if (s == 0.0) continue;
        c0 = _mm256_fmadd_pd(_mm256_set1_pd(s), _mm256_loadu_pd(b + p * ldb + j), c0);
      }
      _mm256_storeu_pd(ci + j, c0);
    }
    for (; j < n; ++j) {
      double acc = ci[j];
      for (std::size_t p = 0; p < k; ++p) {
        const double s = ai[p * a_col];
        if (s != 0.0) acc += s * b[p * ldb + j];
      }
      ci[j] = acc;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot(a + i * lda, b + j * ldb, k);
}

}  // namespace inconvad::kernels::avx2

#else

namespace inconvad::kernels::avx2 {
double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { scalar::axpy(alpha, x, y, n); }
double sum_squares(const double* x, std::size_t n) { return scalar::sum_squares(x, n); }
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_row, std::size_t a_col,
          const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  scalar::gemm(m, n, k, a, a_row, a_col, b, ldb, c, ldc);
}
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  scalar::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc);
}
}  // namespace inconvad::kernels::avx2

#endif

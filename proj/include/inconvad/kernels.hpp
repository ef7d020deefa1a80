#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Data-parallel inner loops shared by the autograd matmuls, the prosody
// autocorrelation and the filterbank. Every kernel has a scalar reference
// implementation and a vectorized variant; the active one is picked once at
// startup from the CPU feature set and can be pinned with INCONVAD_ISA.
namespace inconvad::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Best ISA supported by this CPU (ignores INCONVAD_ISA).
Isa detect_isa();

// ISA currently used by the dispatching entry points below.
Isa active_isa();

// Pin the dispatch table. Throws std::invalid_argument when the CPU lacks
// the requested instruction set.
void set_isa(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Sum of squares; used by frame energy and autocorrelation normalization.
double sum_squares(std::span<const double> x);

// C (m x n, row stride ldc) += A (m x k) * B (k x n, row stride ldb), where
// element (i, p) of A is a[i * a_row + p * a_col]. Zero entries of A are
// skipped, so non-finite rows of B behind zero weights never propagate.
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_row, std::size_t a_col,
          const double* b, std::size_t ldb, double* c, std::size_t ldc);

// C (m x n) += A (m x k) * B^T with B stored n x k.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_row, std::size_t a_col,
          const double* b, std::size_t ldb, double* c, std::size_t ldc);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_row, std::size_t a_col,
          const double* b, std::size_t ldb, double* c, std::size_t ldc);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);
}  // namespace avx2

}  // namespace inconvad::kernels

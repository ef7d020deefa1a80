#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "inconvad/kernels.hpp"

namespace inconvad::kernels {

namespace {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*sum_squares)(const double*, std::size_t);
  void (*gemm)(std::size_t, std::size_t, std::size_t, const double*, std::size_t, std::size_t, const double*,
               std::size_t, double*, std::size_t);
  void (*gemm_nt)(std::size_t, std::size_t, std::size_t, const double*, std::size_t, const double*, std::size_t,
                  double*, std::size_t);
};

constexpr Table kScalar{scalar::dot, scalar::axpy, scalar::sum_squares, scalar::gemm, scalar::gemm_nt};
constexpr Table kAvx2{avx2::dot, avx2::axpy, avx2::sum_squares, avx2::gemm, avx2::gemm_nt};

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const Isa best = detect_isa();
  if (const char* env = std::getenv("INCONVAD_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
  }
  return best;
}

std::atomic<const Table*>& table_slot() {
  static std::atomic<const Table*> slot{initial_isa() == Isa::avx2 ? &kAvx2 : &kScalar};
  return slot;
}

inline const Table& table() { return *table_slot().load(std::memory_order_relaxed); }

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detect_isa() { return cpu_has_avx2() ? Isa::avx2 : Isa::scalar; }

Isa active_isa() { return &table() == &kAvx2 ? Isa::avx2 : Isa::scalar; }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !cpu_has_avx2()) throw std::invalid_argument("CPU does not support AVX2+FMA");
  table_slot().store(isa == Isa::avx2 ? &kAvx2 : &kScalar);
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return table().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  table().axpy(alpha, x.data(), y.data(), x.size());
}

double sum_squares(std::span<const double> x) { return table().sum_squares(x.data(), x.size()); }

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_row, std::size_t a_col,
          const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  table().gemm(m, n, k, a, a_row, a_col, b, ldb, c, ldc);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  table().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace inconvad::kernels

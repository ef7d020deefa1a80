#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "inconvad/matrix.hpp"

namespace inconvad {

// Minimum predicted variance of every heteroscedastic head.
inline constexpr double kVarianceFloor = 2e-3;

inline constexpr std::array<const char*, 3> kVadNames{"V", "A", "D"};

struct VadVector {
  double v = 0.0;
  double a = 0.0;
  double d = 0.0;

  double operator[](std::size_t k) const { return k == 0 ? v : (k == 1 ? a : d); }
  double& operator[](std::size_t k) { return k == 0 ? v : (k == 1 ? a : d); }
  bool finite() const { return std::isfinite(v) && std::isfinite(a) && std::isfinite(d); }
  friend bool operator==(const VadVector&, const VadVector&) = default;
};

// Per-dimension mean and log-variance of a Gaussian VAD prediction.
struct GaussianVad {
  VadVector mu;
  std::array<double, 3> log_var{0.0, 0.0, 0.0};

  double variance(std::size_t k) const { return std::exp(log_var[k]); }
  bool finite() const {
    return mu.finite() && std::isfinite(log_var[0]) && std::isfinite(log_var[1]) && std::isfinite(log_var[2]);
  }
  bool respects_floor() const {
    for (double lv : log_var)
      if (std::exp(lv) < kVarianceFloor * (1.0 - 1e-12)) return false;
    return true;
  }
};

// T x D frames plus a validity mask (true = valid).
struct FeatureSequence {
  Matrix frames;
  std::vector<bool> mask;

  FeatureSequence() = default;
  explicit FeatureSequence(Matrix f) : frames(std::move(f)), mask(frames.rows(), true) {}
  FeatureSequence(Matrix f, std::vector<bool> m) : frames(std::move(f)), mask(std::move(m)) { validate(); }

  std::size_t length() const { return frames.rows(); }
  std::size_t width() const { return frames.cols(); }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (bool m : mask) n += m ? 1 : 0;
    return n;
  }
  void validate() const {
    if (frames.rows() == 0) throw std::invalid_argument("feature sequence must have at least one frame");
    if (mask.size() != frames.rows()) throw std::invalid_argument("feature sequence mask length mismatch");
  }
};

}  // namespace inconvad

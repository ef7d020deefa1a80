#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string>

// Cross-corpus label harmonization by Beta-CDF quantile mapping:
// a native label is min-max normalized, pushed through the source Beta CDF
// and then through the target Beta inverse CDF, and rescaled to the target
// range. Dimensions are aligned independently.
namespace inconvad::align {

struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;
  double lo = 0.0;  // native-scale minimum
  double hi = 1.0;  // native-scale maximum

  void validate() const;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Method-of-moments fit on min-max normalized values; shapes clamped to
// [0.05, 500].
BetaParams fit_beta(std::span<const double> values, double lo, double hi);

// Regularized incomplete beta I_x(alpha, beta) via Lentz continued fraction.
double beta_cdf(double x, const BetaParams& p);

// Inverse of beta_cdf by safeguarded Newton/bisection.
double beta_icdf(double u, const BetaParams& p);

double align_label(double v, const BetaParams& src, const BetaParams& tgt);
double invert_label(double v_aligned, const BetaParams& src, const BetaParams& tgt);

// Per-dimension parameter sets (V, A, D), serialized as key=value text with
// keys "<dim>.alpha", "<dim>.beta", "<dim>.lo", "<dim>.hi".
using VadBetaParams = std::array<BetaParams, 3>;

VadBetaParams read_params(const std::string& path);
void write_params(const std::string& path, const VadBetaParams& params);
std::string format_params(const VadBetaParams& params);
VadBetaParams parse_params(const std::string& text);

}  // namespace inconvad::align

#include "inconvad/label_alignment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "inconvad/config.hpp"
#include "inconvad/types.hpp"

namespace inconvad::align {

namespace {

constexpr double kShapeMin = 0.05;
constexpr double kShapeMax = 500.0;

// Continued fraction for I_x(a, b) (modified Lentz).
double incomplete_beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 1000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

double normalize(double v, const BetaParams& p) { return (v - p.lo) / (p.hi - p.lo); }

// I_x(a, b) with relative precision kept when the result is small.
double lower_tail(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::clamp(front * incomplete_beta_cf(a, b, x) / a, 0.0, 1.0);
  return std::clamp(1.0 - front * incomplete_beta_cf(b, a, 1.0 - x) / b, 0.0, 1.0);
}

// Solves I_x(a, b) = q for q in (0, 0.5] by Newton steps inside a shrinking
// bracket. Bisection falls back to geometric steps so tiny roots are found
// to full relative precision.
double lower_tail_inverse(double q, double a, double b) {
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  double lo = 0.0, hi = 1.0;
  // Leading term of the series near 0: I_x ~ x^a / (a B(a, b)).
  double x = std::exp((std::log(q) + std::log(a) - log_norm) / a);
  if (!(x > 0.0 && x < 1.0)) x = a / (a + b);
  for (int it = 0; it < 400; ++it) {
    const double f = lower_tail(x, a, b) - q;
    if (f == 0.0) return x;
    if (f > 0.0) hi = x; else lo = x;
    if (hi - lo <= 4e-16 * hi) break;
    const double pdf = std::exp(log_norm + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x));
    double next = (pdf > 0.0 && std::isfinite(pdf)) ? x - f / pdf : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi)) next = lo == 0.0 ? hi * 1e-3 : (hi > 4.0 * lo ? std::sqrt(lo * hi) : 0.5 * (lo + hi));
    if (next == x) break;
    x = next;
  }
  return x;
}

}  // namespace

void BetaParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("beta parameters must be positive");
  if (!(hi > lo)) throw std::invalid_argument("beta range requires hi > lo");
}

BetaParams fit_beta(std::span<const double> values, double lo, double hi) {
  if (!(hi > lo)) throw std::invalid_argument("fit_beta: hi must exceed lo");
  if (values.size() < 2) throw FitError("fit_beta: need at least two values");
  double mean = 0.0;
  for (double v : values) {
    if (!(v >= lo && v <= hi)) throw RangeError("fit_beta: value outside [lo, hi]");
    mean += (v - lo) / (hi - lo);
  }
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) {
    const double x = (v - lo) / (hi - lo);
    var += (x - mean) * (x - mean);
  }
  var /= static_cast<double>(values.size());
  if (var <= 0.0) throw FitError("fit_beta: zero variance (all values equal)");
  const double bound = mean * (1.0 - mean);
  if (var >= bound) throw FitError("fit_beta: variance >= m(1-m), no Beta distribution matches these moments");
  const double k = bound / var - 1.0;
  BetaParams p;
  p.alpha = std::clamp(mean * k, kShapeMin, kShapeMax);
  p.beta = std::clamp((1.0 - mean) * k, kShapeMin, kShapeMax);
  p.lo = lo;
  p.hi = hi;
  return p;
}

double beta_cdf(double x, const BetaParams& p) {
  if (!(x >= 0.0 && x <= 1.0)) throw RangeError("beta_cdf: x outside [0, 1]");
  return lower_tail(x, p.alpha, p.beta);
}

double beta_icdf(double u, const BetaParams& p) {
  if (!(u >= 0.0 && u <= 1.0)) throw RangeError("beta_icdf: u outside [0, 1]");
  if (u == 0.0) return 0.0;
  if (u == 1.0) return 1.0;
  if (u <= 0.5) return lower_tail_inverse(u, p.alpha, p.beta);
  return 1.0 - lower_tail_inverse(1.0 - u, p.beta, p.alpha);
}

namespace {

// Quantile transfer between two scaled Betas. Upper-half quantiles are
// carried as distances from `hi` so neither tail loses precision.
double transfer(double v, const BetaParams& src, const BetaParams& tgt) {
  const double x = normalize(v, src);
  const double u = lower_tail(x, src.alpha, src.beta);
  if (u == 0.0) return tgt.lo;
  if (u <= 0.5) return tgt.lo + lower_tail_inverse(u, tgt.alpha, tgt.beta) * (tgt.hi - tgt.lo);
  const double upper = lower_tail((src.hi - v) / (src.hi - src.lo), src.beta, src.alpha);
  if (upper == 0.0) return tgt.hi;
  return tgt.hi - lower_tail_inverse(upper, tgt.beta, tgt.alpha) * (tgt.hi - tgt.lo);
}

}  // namespace

double align_label(double v, const BetaParams& src, const BetaParams& tgt) {
  src.validate();
  tgt.validate();
  if (!(v >= src.lo && v <= src.hi)) throw RangeError("align_label: value outside source range");
  return transfer(v, src, tgt);
}

double invert_label(double v_aligned, const BetaParams& src, const BetaParams& tgt) {
  src.validate();
  tgt.validate();
  if (!(v_aligned >= tgt.lo && v_aligned <= tgt.hi)) throw RangeError("invert_label: value outside target range");
  return transfer(v_aligned, tgt, src);
}
// ------------------------------------------------------------ param files

std::string format_params(const VadBetaParams& params) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t k = 0; k < 3; ++k) {
    const char* dim = kVadNames[k];
    os << dim << ".alpha=" << params[k].alpha << '\n'
       << dim << ".beta=" << params[k].beta << '\n'
       << dim << ".lo=" << params[k].lo << '\n'
       << dim << ".hi=" << params[k].hi << '\n';
  }
  return os.str();
}

VadBetaParams parse_params(const std::string& text) {
  const KeyValues kv = parse_key_values(text);
  VadBetaParams out;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string dim = kVadNames[k];
    out[k].alpha = kv.get_double(dim + ".alpha");
    out[k].beta = kv.get_double(dim + ".beta");
    out[k].lo = kv.get_double(dim + ".lo");
    out[k].hi = kv.get_double(dim + ".hi");
    out[k].validate();
  }
  return out;
}

VadBetaParams read_params(const std::string& path) { return parse_params(read_text_file(path)); }

void write_params(const std::string& path, const VadBetaParams& params) {
  write_text_file(path, format_params(params));
}

}  // namespace inconvad::align

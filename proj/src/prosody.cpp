#include "inconvad/prosody.hpp"

#include <algorithm>
#include <cmath>

#include "inconvad/config.hpp"
#include "inconvad/kernels.hpp"

namespace inconvad::prosody {

namespace {

// A channel whose spread is below this fraction of its magnitude is treated
// as constant (estimation jitter on a steady tone must not be amplified).
constexpr double kConstantRelTol = 1e-4;
constexpr double kConstantAbsTol = 1e-9;

// Candidate lags within this fraction of the best correlation are resolved
// toward the shortest lag, which suppresses period-doubling errors.
constexpr double kOctaveTolerance = 0.95;

std::span<const double> frame_at(const Waveform& w, const Framing& f, std::size_t t) {
  return std::span<const double>(w.samples).subspan(t * f.hop, f.frame_length);
}

}  // namespace

Framing Framing::from_ms(double frame_ms, double hop_ms, int sample_rate_hz) {
  if (!(hop_ms > 0.0) || !(frame_ms >= hop_ms)) throw ConfigError("framing requires frame_ms >= hop_ms > 0");
  Framing f;
  f.frame_length = static_cast<std::size_t>(std::lround(frame_ms * sample_rate_hz / 1000.0));
  f.hop = static_cast<std::size_t>(std::lround(hop_ms * sample_rate_hz / 1000.0));
  if (f.frame_length == 0 || f.hop == 0) throw ConfigError("framing resolves to zero samples");
  return f;
}

std::size_t Framing::frame_count(std::size_t n_samples) const {
  if (n_samples < frame_length)
    throw FramingError("waveform of " + std::to_string(n_samples) + " samples is shorter than one frame (" +
                       std::to_string(frame_length) + ")");
  return 1 + (n_samples - frame_length) / hop;
}

Matrix ProsodyFrames::as_matrix() const {
  Matrix m(pitch.size(), 2);
  for (std::size_t t = 0; t < pitch.size(); ++t) {
    m(t, 0) = pitch[t];
    m(t, 1) = log_energy[t];
  }
  return m;
}

std::vector<double> extract_energy(const Waveform& w, double frame_ms, double hop_ms) {
  w.validate();
  const Framing f = Framing::from_ms(frame_ms, hop_ms, w.sample_rate_hz);
  const std::size_t T = f.frame_count(w.samples.size());
  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double ms = kernels::sum_squares(frame_at(w, f, t)) / static_cast<double>(f.frame_length);
    out[t] = std::log(kEnergyFloor + ms);
  }
  return out;
}

std::vector<double> extract_pitch(const Waveform& w, double frame_ms, double hop_ms, double f_min_hz,
                                  double f_max_hz, double voicing_threshold) {
  w.validate();
  const double fs = w.sample_rate_hz;
  if (!(f_min_hz > 0.0) || !(f_min_hz < f_max_hz) || f_max_hz > fs / 2.0)
    throw ConfigError("pitch bounds require 0 < f_min < f_max <= sample_rate / 2");
  const Framing f = Framing::from_ms(frame_ms, hop_ms, w.sample_rate_hz);
  const std::size_t L = f.frame_length;
  if (static_cast<double>(L) + 1e-9 < 2.0 * fs / f_min_hz)
    throw ConfigError("frame too short to hold two periods of f_min");
  const std::size_t T = f.frame_count(w.samples.size());

  const auto lag_min = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(fs / f_max_hz)));
  const auto lag_max = std::min<std::size_t>(L - 2, static_cast<std::size_t>(std::ceil(fs / f_min_hz)));

  std::vector<double> out(T, 0.0);
  std::vector<double> prefix(L + 1);
  std::vector<double> r(lag_max + 2, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    auto x = frame_at(w, f, t);
    prefix[0] = 0.0;
    for (std::size_t n = 0; n < L; ++n) prefix[n + 1] = prefix[n] + x[n] * x[n];
    for (std::size_t lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      const std::size_t n = L - lag;
      const double e1 = prefix[n];
      const double e2 = prefix[L] - prefix[lag];
      const double denom = std::sqrt(e1 * e2);
      r[lag] = denom > 0.0 ? kernels::dot(x.subspan(0, n), x.subspan(lag, n)) / denom : 0.0;
    }
    std::size_t best = lag_min;
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag)
      if (r[lag] > r[best]) best = lag;
    if (!(r[best] >= voicing_threshold)) continue;
    for (std::size_t lag = lag_min; lag < best; ++lag) {
      if (r[lag] >= kOctaveTolerance * r[best] && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) {
        best = lag;
        break;
      }
    }
    double shift = 0.0;
    const double a = r[best - 1], b = r[best], c = r[best + 1];
    const double curvature = a - 2.0 * b + c;
    if (curvature < 0.0) shift = std::clamp(0.5 * (a - c) / curvature, -0.5, 0.5);
    out[t] = fs / (static_cast<double>(best) + shift);
  }
  return out;
}

void z_normalize(std::vector<double>& channel) {
  if (channel.empty()) return;
  const double n = static_cast<double>(channel.size());
  double mean = 0.0;
  for (double v : channel) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : channel) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (sd <= kConstantAbsTol + kConstantRelTol * std::fabs(mean)) {
    std::fill(channel.begin(), channel.end(), 0.0);
    return;
  }
  for (double& v : channel) v = (v - mean) / sd;
}

ProsodyFrames extract_prosody(const Waveform& w, const ProsodyConfig& cfg, std::optional<std::size_t> target_frames) {
  ProsodyFrames p;
  p.pitch = extract_pitch(w, cfg.frame_ms, cfg.hop_ms, cfg.f_min_hz, cfg.f_max_hz, cfg.voicing_threshold);
  p.log_energy = extract_energy(w, cfg.frame_ms, cfg.hop_ms);
  z_normalize(p.pitch);
  z_normalize(p.log_energy);
  if (target_frames) {
    p.pitch.resize(*target_frames, 0.0);
    p.log_energy.resize(*target_frames, 0.0);
  }
  return p;
}

}  // namespace inconvad::prosody

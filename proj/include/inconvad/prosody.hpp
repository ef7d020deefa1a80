#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "inconvad/matrix.hpp"
#include "inconvad/wav.hpp"

namespace inconvad::prosody {

class FramingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Framing {
  std::size_t frame_length = 0;  // samples
  std::size_t hop = 0;           // samples

  static Framing from_ms(double frame_ms, double hop_ms, int sample_rate_hz);
  // 1 + floor((N - L) / H); throws FramingError when N < L.
  std::size_t frame_count(std::size_t n_samples) const;
};

struct ProsodyConfig {
  double frame_ms = 25.0;
  double hop_ms = 20.0;
  double f_min_hz = 80.0;
  double f_max_hz = 400.0;
  double voicing_threshold = 0.3;
};

// Per-frame pitch (Hz, 0 = unvoiced) and log-energy, both z-normalized per
// utterance. Row t of as_matrix() is (pitch, log_energy).
struct ProsodyFrames {
  std::vector<double> pitch;
  std::vector<double> log_energy;

  std::size_t size() const { return pitch.size(); }
  Matrix as_matrix() const;
};

inline constexpr double kEnergyFloor = 1e-10;

// log(1e-10 + mean square) per frame.
std::vector<double> extract_energy(const Waveform& w, double frame_ms, double hop_ms);

// Normalized-autocorrelation pitch per frame; 0 where the peak correlation
// is below the voicing threshold.
std::vector<double> extract_pitch(const Waveform& w, double frame_ms, double hop_ms, double f_min_hz,
                                  double f_max_hz, double voicing_threshold = 0.3);

// Stacks pitch and energy, z-normalizes each channel, and pads (with zeros)
// or truncates to `target_frames` when given.
ProsodyFrames extract_prosody(const Waveform& w, const ProsodyConfig& cfg,
                              std::optional<std::size_t> target_frames = std::nullopt);

// In-place per-utterance z-normalization; near-constant channels become 0.
void z_normalize(std::vector<double>& channel);

}  // namespace inconvad::prosody

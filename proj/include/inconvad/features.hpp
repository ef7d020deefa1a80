#pragma once

#include <cstddef>
#include <string>

#include "inconvad/matrix.hpp"
#include "inconvad/types.hpp"
#include "inconvad/wav.hpp"

namespace inconvad::features {

struct FilterbankConfig {
  double frame_ms = 25.0;
  double hop_ms = 20.0;
  std::size_t n_mels = 40;
  std::size_t n_fft = 512;
};

// Hann-windowed power spectrum pooled by triangular mel filters, returned as
// log(1e-10 + band energy). Frame count matches prosody::Framing.
Matrix log_mel_filterbank(const Waveform& w, const FilterbankConfig& cfg = {});

// --- precomputed embedding archive ---------------------------------------
// One directory per split holding `<id>.f32` (raw little-endian fp32, T x D,
// row-major) and `manifest.tsv` with lines `id<TAB>T<TAB>D`.

class FeatureArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

FeatureSequence load_precomputed_features(const std::string& split_dir, const std::string& id,
                                          std::size_t expected_width);

// Writes the matrix and appends (or replaces) its manifest line.
void save_precomputed_features(const std::string& split_dir, const std::string& id, const Matrix& frames);

}  // namespace inconvad::features

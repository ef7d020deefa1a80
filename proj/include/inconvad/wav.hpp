#pragma once

#include <string>
#include <vector>

namespace inconvad {

struct Waveform {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate_hz = 16000;

  void validate() const;
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

// Reads a mono RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float
// samples. Multi-channel files are rejected.
Waveform read_wav(const std::string& path);

// Writes 16-bit PCM; samples are clipped to [-1, 1] before quantization.
void write_wav_pcm16(const std::string& path, const Waveform& w);

}  // namespace inconvad

#include "inconvad/features.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

#include "inconvad/config.hpp"
#include "inconvad/kernels.hpp"
#include "inconvad/prosody.hpp"

namespace inconvad::features {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Per-thread real-to-complex transform of a fixed size.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void power(std::vector<double>& out) {
    fftw_execute(plan_);
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

RealFft& thread_fft(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// n_mels x (n_fft/2 + 1) triangular weights.
Matrix mel_filters(std::size_t n_mels, std::size_t n_fft, double sample_rate) {
  const std::size_t bins = n_fft / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  Matrix fb(n_mels, bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = sample_rate * static_cast<double>(k) / static_cast<double>(n_fft);
      double wgt = 0.0;
      if (f > left && f <= centre) wgt = (f - left) / (centre - left);
      else if (f > centre && f < right) wgt = (right - f) / (right - centre);
      fb(m, k) = wgt;
    }
  }
  return fb;
}

std::string manifest_path(const std::string& dir) { return (std::filesystem::path(dir) / "manifest.tsv").string(); }

}  // namespace

Matrix log_mel_filterbank(const Waveform& w, const FilterbankConfig& cfg) {
  w.validate();
  const auto framing = prosody::Framing::from_ms(cfg.frame_ms, cfg.hop_ms, w.sample_rate_hz);
  if (cfg.n_fft < framing.frame_length) throw ConfigError("n_fft must be at least the frame length");
  const std::size_t T = framing.frame_count(w.samples.size());
  thread_local std::map<std::tuple<std::size_t, std::size_t, int>, Matrix> filter_cache;
  auto key = std::make_tuple(cfg.n_mels, cfg.n_fft, w.sample_rate_hz);
  auto it = filter_cache.find(key);
  if (it == filter_cache.end()) it = filter_cache.emplace(key, mel_filters(cfg.n_mels, cfg.n_fft, w.sample_rate_hz)).first;
  const Matrix& fb = it->second;

  std::vector<double> window(framing.frame_length);
  for (std::size_t n = 0; n < window.size(); ++n)
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                     static_cast<double>(window.size() - 1));

  RealFft& fft = thread_fft(cfg.n_fft);
  std::vector<double> power;
  Matrix out(T, cfg.n_mels);
  for (std::size_t t = 0; t < T; ++t) {
    double* in = fft.input();
    std::memset(in, 0, sizeof(double) * cfg.n_fft);
    for (std::size_t n = 0; n < framing.frame_length; ++n) in[n] = w.samples[t * framing.hop + n] * window[n];
    fft.power(power);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const double e = kernels::dot(fb.row(m), power);
      out(t, m) = std::log(1e-10 + e);
    }
  }
  return out;
}

FeatureSequence load_precomputed_features(const std::string& split_dir, const std::string& id,
                                          std::size_t expected_width) {
  std::ifstream man(manifest_path(split_dir));
  if (!man) throw FeatureArchiveError("feature manifest not found in " + split_dir);
  std::string line;
  std::size_t rows = 0, cols = 0;
  bool found = false;
  while (std::getline(man, line)) {
    const auto fields = split(trim(line), '\t');
    if (fields.size() != 3 || fields[0] != id) continue;
    rows = std::stoull(fields[1]);
    cols = std::stoull(fields[2]);
    found = true;
  }
  if (!found) throw FeatureArchiveError("utterance id not found in feature archive: " + id);
  if (cols != expected_width)
    throw FeatureArchiveError("feature width mismatch for " + id + ": archive has " + std::to_string(cols) +
                              ", config expects " + std::to_string(expected_width));
  if (rows == 0) throw FeatureArchiveError("feature matrix for " + id + " has no frames");
  const auto path = std::filesystem::path(split_dir) / (id + ".f32");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeatureArchiveError("missing feature payload " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != rows * cols * 4) throw FeatureArchiveError("feature payload size mismatch for " + id);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const unsigned char* p = bytes.data() + 4 * i;
    const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    m[i] = f;
  }
  return FeatureSequence(std::move(m));
}

void save_precomputed_features(const std::string& split_dir, const std::string& id, const Matrix& frames) {
  std::filesystem::create_directories(split_dir);
  std::string payload;
  payload.reserve(frames.size() * 4);
  for (double v : frames.flat()) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    for (int i = 0; i < 4; ++i) payload.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
  write_text_file((std::filesystem::path(split_dir) / (id + ".f32")).string(), payload);

  std::string kept;
  if (std::filesystem::exists(manifest_path(split_dir))) {
    std::istringstream in(read_text_file(manifest_path(split_dir)));
    std::string line;
    while (std::getline(in, line)) {
      const auto fields = split(line, '\t');
      if (!fields.empty() && fields[0] == id) continue;
      if (!trim(line).empty()) kept += line + "\n";
    }
  }
  kept += id + "\t" + std::to_string(frames.rows()) + "\t" + std::to_string(frames.cols()) + "\n";
  write_text_file(manifest_path(split_dir), kept);
}

}  // namespace inconvad::features

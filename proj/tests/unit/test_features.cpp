#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "inconvad/features.hpp"
#include "inconvad/wav.hpp"

using namespace inconvad;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("inconvad_features_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<float>(u(rng));
  return m;
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("filterbank shape and silent input") {
    Waveform w;
    w.samples.assign(16000, 0.0);
    const auto fb = features::log_mel_filterbank(w);
    CHECK(fb.rows() == 49);
    CHECK(fb.cols() == 40);
    for (double v : fb.flat()) CHECK(std::isfinite(v));
  }

  TEST_CASE("filterbank places a tone in the matching band") {
    Waveform w;
    for (int i = 0; i < 16000; ++i) w.samples.push_back(0.5 * std::sin(2 * M_PI * 1000.0 * i / 16000.0));
    const auto fb = features::log_mel_filterbank(w);
    const auto row = fb.row(10);
    const auto peak = std::max_element(row.begin(), row.end()) - row.begin();
    // 1 kHz sits roughly a third of the way up a 40-band mel scale to 8 kHz.
    CHECK(peak > 8);
    CHECK(peak < 20);
  }

  TEST_CASE("archive round trip") {
    const auto dir = scratch("roundtrip");
    const auto m = random_matrix(49, 768, 1);
    features::save_precomputed_features(dir.string(), "utt1", m);
    features::save_precomputed_features(dir.string(), "utt2", random_matrix(3, 768, 2));
    const auto back = features::load_precomputed_features(dir.string(), "utt1", 768);
    CHECK(back.frames == m);
    CHECK(back.valid_count() == 49);
  }

  TEST_CASE("archive errors") {
    const auto dir = scratch("errors");
    features::save_precomputed_features(dir.string(), "utt1", random_matrix(4, 768, 1));
    CHECK_THROWS_AS(features::load_precomputed_features(dir.string(), "utt1", 256), features::FeatureArchiveError);
    CHECK_THROWS_AS(features::load_precomputed_features(dir.string(), "nope", 768), features::FeatureArchiveError);
    CHECK_THROWS_AS(features::load_precomputed_features((dir / "missing").string(), "utt1", 768),
                    features::FeatureArchiveError);
    std::ofstream(dir / "utt1.f32", std::ios::binary | std::ios::trunc) << "xx";
    CHECK_THROWS_AS(features::load_precomputed_features(dir.string(), "utt1", 768), features::FeatureArchiveError);
  }

  TEST_CASE("wav round trip") {
    const auto dir = scratch("wav");
    Waveform w;
    for (int i = 0; i < 800; ++i) w.samples.push_back(0.9 * std::sin(i * 0.05));
    write_wav_pcm16((dir / "a.wav").string(), w);
    const auto back = read_wav((dir / "a.wav").string());
    CHECK(back.sample_rate_hz == 16000);
    REQUIRE(back.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(back.samples[i] - w.samples[i]) < 1.0 / 32767);
    CHECK_THROWS(read_wav((dir / "missing.wav").string()));
  }

  TEST_CASE("waveform validation") {
    Waveform w;
    CHECK_THROWS(w.validate());
    w.samples = {0.1};
    w.sample_rate_hz = 4000;
    CHECK_THROWS(w.validate());
  }
}

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "inconvad/features.hpp"
#include "inconvad/prosody.hpp"

using namespace inconvad;
using namespace inconvad::prosody;

namespace {

Waveform sine(double hz, std::size_t n, double amp = 0.5, int fs = 16000) {
  Waveform w;
  w.sample_rate_hz = fs;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / fs);
  return w;
}

Waveform noise(std::size_t n, std::uint64_t seed) {
  Waveform w;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  w.samples.resize(n);
  for (auto& s : w.samples) s = std::clamp(g(rng), -1.0, 1.0);
  return w;
}

}  // namespace

TEST_SUITE("prosody") {
  TEST_CASE("frame count formula") {
    const auto f = Framing::from_ms(25.0, 20.0, 16000);
    CHECK(f.frame_length == 400);
    CHECK(f.hop == 320);
    CHECK(f.frame_count(16000) == 49);
    CHECK(f.frame_count(400) == 1);
    CHECK_THROWS_AS(f.frame_count(399), FramingError);
  }

  TEST_CASE("energy of silence and of a square wave") {
    Waveform silent;
    silent.samples.assign(16000, 0.0);
    for (double e : extract_energy(silent, 25, 20)) CHECK(e == doctest::Approx(std::log(1e-10)).epsilon(1e-12));

    Waveform square;
    for (int i = 0; i < 16000; ++i) square.samples.push_back((i / 40) % 2 ? 1.0 : -1.0);
    const auto e = extract_energy(square, 25, 20);
    CHECK(e.size() == 49);
    for (double v : e) CHECK(std::abs(v - std::log(1e-10 + 1.0)) < 1e-9);
  }

  TEST_CASE("energy shifts by 2 log c under scaling") {
    const auto w = noise(16000, 3);
    Waveform scaled = w;
    for (auto& s : scaled.samples) s *= 0.37;
    const auto a = extract_energy(w, 25, 20);
    const auto b = extract_energy(scaled, 25, 20);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(b[i] - a[i] - 2.0 * std::log(0.37)) < 1e-6);
  }

  TEST_CASE("pitch of a 220 Hz sine") {
    const auto p = extract_pitch(sine(220.0, 16000), 25, 20, 80, 400);
    CHECK(p.size() == 49);
    std::size_t voiced = 0;
    for (double hz : p) {
      if (hz > 0) {
        ++voiced;
        CHECK(std::abs(hz - 220.0) <= 3.0);
      }
    }
    CHECK(voiced == p.size());
  }

  TEST_CASE("white noise is mostly unvoiced, silence fully") {
    const auto p = extract_pitch(noise(32000, 9), 25, 20, 80, 400);
    std::size_t unvoiced = 0;
    for (double hz : p) unvoiced += hz == 0.0 ? 1 : 0;
    CHECK(static_cast<double>(unvoiced) >= 0.9 * p.size());

    Waveform silent;
    silent.samples.assign(8000, 0.0);
    for (double hz : extract_pitch(silent, 25, 20, 80, 400)) CHECK(hz == 0.0);
  }

  TEST_CASE("pitch is amplitude invariant and never negative") {
    auto w = sine(150.0, 12000, 0.8);
    const auto n = noise(12000, 4);
    for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = 0.8 * w.samples[i] + 0.1 * n.samples[i];
    Waveform quiet = w;
    for (auto& s : quiet.samples) s *= 0.01;
    const auto a = extract_pitch(w, 25, 20, 80, 400);
    const auto b = extract_pitch(quiet, 25, 20, 80, 400);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] >= 0.0);
      CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));
    }
  }

  TEST_CASE("invalid pitch bounds are rejected") {
    const auto w = sine(220.0, 16000);
    CHECK_THROWS(extract_pitch(w, 25, 20, 400, 80));
    CHECK_THROWS(extract_pitch(w, 25, 20, 80, 9000));
    CHECK_THROWS(extract_pitch(w, 25, 20, 20, 400));  // 25 ms cannot hold two 50 ms periods
  }

  TEST_CASE("energy rises under an amplitude ramp") {
    auto w = sine(220.0, 16000);
    for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] *= static_cast<double>(i) / w.samples.size();
    const auto e = extract_energy(w, 25, 20);
    for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i] > e[i - 1]);
  }

  TEST_CASE("prosody frames align with the filterbank and are normalized") {
    for (std::size_t n : {400u, 5000u, 16000u, 23456u}) {
      auto w = noise(n, n);
      const auto fb = features::log_mel_filterbank(w);
      const auto p = extract_prosody(w, ProsodyConfig{});
      CHECK(p.size() == fb.rows());
      CHECK(p.as_matrix().rows() == fb.rows());
      CHECK(p.as_matrix().cols() == 2);
    }
    auto w = sine(220.0, 16000);
    for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] *= 0.2 + 0.8 * i / w.samples.size();
    const auto p = extract_prosody(w, ProsodyConfig{});
    // Constant pitch: the channel collapses to zeros.
    for (double v : p.pitch) CHECK(v == 0.0);
    double mean = 0, sq = 0;
    for (double v : p.log_energy) {
      mean += v;
      sq += v * v;
    }
    mean /= p.size();
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(sq / p.size() - 1.0) < 1e-9);
  }

  TEST_CASE("prosody pads and truncates to a target frame count") {
    const auto w = sine(220.0, 16000);
    CHECK(extract_prosody(w, ProsodyConfig{}, 60).size() == 60);
    CHECK(extract_prosody(w, ProsodyConfig{}, 10).size() == 10);
  }

  TEST_CASE("z_normalize") {
    std::vector<double> c{1.0, 2.0, 3.0, 4.0};
    z_normalize(c);
    CHECK(c[0] == doctest::Approx(-1.3416407865));
    std::vector<double> flat{5.0, 5.0, 5.0};
    z_normalize(flat);
    for (double v : flat) CHECK(v == 0.0);
  }

  TEST_CASE("short waveform errors") {
    const auto w = sine(220.0, 100);
    CHECK_THROWS_AS(extract_energy(w, 25, 20), FramingError);
    CHECK_THROWS_AS(extract_prosody(w, ProsodyConfig{}), FramingError);
  }
}

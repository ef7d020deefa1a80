#pragma once

#include <random>
#include <string>
#include <vector>

#include "inconvad/fusion_classifier.hpp"
#include "inconvad/towers.hpp"

// Small deterministic models and inputs shared by unit and acceptance tests.
namespace testing_support {

using inconvad::Matrix;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = n(rng);
  return m;
}

inline inconvad::towers::TowerConfig tiny_tower_config() {
  inconvad::towers::TowerConfig c;
  c.d_model = 8;
  c.n_conformer = 1;
  c.n_heads = 2;
  c.conv_kernel = 3;
  c.ffn_mult = 2;
  c.dropout = 0.0;
  c.n_encoder_layers = 1;
  c.vocab_buckets = 16;
  c.fbank_bands = 6;
  return c;
}

inline inconvad::towers::SpeechInput tiny_speech_input(std::size_t frames, std::uint64_t seed,
                                                       std::size_t bands = 6) {
  inconvad::towers::SpeechInput in;
  in.acoustic = random_matrix(frames, bands, seed);
  in.prosody = random_matrix(frames, 2, seed + 1);
  in.mask.assign(frames, true);
  return in;
}

inline inconvad::towers::TextInput tiny_text_input(std::size_t tokens, std::uint64_t seed, std::size_t buckets = 16) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  inconvad::towers::TextInput in;
  in.priors = Matrix(tokens, 3);
  for (std::size_t t = 0; t < tokens; ++t) {
    in.ids.push_back(rng() % buckets);
    for (std::size_t k = 0; k < 3; ++k) in.priors(t, k) = u(rng);
  }
  in.mask.assign(tokens, true);
  return in;
}

inline inconvad::fusion::FusionConfig tiny_fusion_config() {
  inconvad::fusion::FusionConfig c;
  c.input_width = 8;
  c.proj_width = 8;
  c.n_heads = 2;
  c.ffn_mult = 2;
  c.dropout = 0.0;
  return c;
}

}  // namespace testing_support

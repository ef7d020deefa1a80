#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "inconvad/config.hpp"
#include "inconvad/features.hpp"
#include "inconvad/layers.hpp"
#include "inconvad/lexicon.hpp"
#include "inconvad/prosody.hpp"
#include "inconvad/types.hpp"
#include "inconvad/wav.hpp"

// Phase A unimodal towers. Both emit an utterance embedding, a Gaussian VAD
// prediction and the pre-pooling sequence consumed by Phase B.
namespace inconvad::towers {

using ag::Graph;
using ag::ParamList;
using ag::Var;

struct TowerConfig {
  std::size_t d_model = 256;
  std::size_t n_conformer = 2;
  std::size_t n_heads = 4;
  std::size_t conv_kernel = 15;
  std::size_t ffn_mult = 4;
  double dropout = 0.1;
  bool prosody_injection = true;
  bool film_gating = true;
  bool aspool = true;
  // Text encoder stand-in.
  std::size_t n_encoder_layers = 2;
  std::size_t vocab_buckets = 4096;
  // Speech front end: 0 selects the toy filterbank encoder, otherwise the
  // width of precomputed acoustic embeddings.
  std::size_t acoustic_width = 0;
  std::size_t fbank_bands = 40;

  void validate() const;
  KeyValues to_key_values() const;
  static TowerConfig from_key_values(const KeyValues& kv);
};

// log_var = log(max(exp(raw), 2e-3)).
double floor_log_variance(double raw_log_var);

GaussianVad to_gaussian(const nn::HeteroscedasticHead::Output& out);

// ---------------------------------------------------------------- speech

// Fixed (non-trainable) speech inputs: either log-mel frames for the toy
// encoder or precomputed embeddings, plus prosody, sharing one frame count.
struct SpeechInput {
  Matrix acoustic;  // T x fbank_bands or T x acoustic_width
  Matrix prosody;   // T x 2
  std::vector<bool> mask;
  bool precomputed = false;

  std::size_t frames() const { return acoustic.rows(); }
};

SpeechInput prepare_speech(const Waveform& w, const TowerConfig& cfg,
                           const prosody::ProsodyConfig& pcfg = {});
SpeechInput prepare_speech_precomputed(const FeatureSequence& acoustic, const Waveform& w, const TowerConfig& cfg,
                                       const prosody::ProsodyConfig& pcfg = {});

struct TowerOutput {
  Var embedding;  // 1 x D'
  nn::HeteroscedasticHead::Output prediction;
  Var sequence;  // T x D' (pre-pooling)
  std::vector<bool> mask;
};

class SpeechTower {
 public:
  SpeechTower(const TowerConfig& cfg, std::uint64_t seed);

  // Trainable acoustic encoder output (T x D); identity on precomputed input.
  Var encode(Graph& g, const SpeechInput& in) const;
  TowerOutput forward(Graph& g, const SpeechInput& in) const;
  ParamList parameters();
  const TowerConfig& config() const { return cfg_; }

  nn::Linear encoder;
  nn::Linear input_projection;
  std::vector<nn::ConformerBlock> conformer;
  nn::AttentiveStatsPool pool;
  nn::HeteroscedasticHead head;

 private:
  TowerConfig cfg_;
};

// Value-level front end of the speech tower: filterbank -> trainable linear.
FeatureSequence toy_speech_encoder(const SpeechTower& tower, const Waveform& w);

// ------------------------------------------------------------------ text

struct TextInput {
  std::vector<std::size_t> ids;
  Matrix priors;  // T x 3
  std::vector<bool> mask;
  double coverage = 0.0;
};

std::size_t token_bucket(const std::string& token, std::size_t buckets);
TextInput prepare_text(const std::vector<std::string>& tokens, const lexicon::VadLexicon& lex, const TowerConfig& cfg);

class TextTower {
 public:
  TextTower(const TowerConfig& cfg, std::uint64_t seed);

  TowerOutput forward(Graph& g, const TextInput& in) const;
  ParamList parameters();
  const TowerConfig& config() const { return cfg_; }

  ag::Parameter embedding;
  std::vector<nn::EncoderLayer> encoder;
  nn::FiLM film;
  nn::AttentiveStatsPool pool;
  nn::HeteroscedasticHead head;

 private:
  TowerConfig cfg_;
};

// Offset/scale applied to log-mel energies before the trainable encoder.
inline constexpr double kFbankOffset = -5.0;
inline constexpr double kFbankScale = 5.0;

}  // namespace inconvad::towers

#pragma once

#include <cstdint>
#include <vector>

#include "inconvad/config.hpp"
#include "inconvad/layers.hpp"
#include "inconvad/types.hpp"

// Phase B heads over the frozen tower sequences: the inconsistency
// classifier and the cross-modal fusion tower.
namespace inconvad::fusion {

using ag::Graph;
using ag::ParamList;
using ag::Var;

struct FusionConfig {
  std::size_t input_width = 256;  // frozen tower sequence width
  std::size_t proj_width = 256;
  std::size_t n_heads = 4;
  std::size_t ffn_mult = 4;
  double dropout = 0.1;
  bool transformer_block = true;  // off: gating runs on the projections
  bool gated_fusion = true;       // off: fixed 0.5 / 0.5 gates

  void validate() const;
  KeyValues to_key_values() const;
  static FusionConfig from_key_values(const KeyValues& kv);
};

// Linear projection followed by layer normalization.
class Projector {
 public:
  Projector() = default;
  Projector(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);

  Var operator()(Graph& g, Var x) const;
  void collect(ParamList& out);

  nn::Linear linear;
  nn::LayerNorm norm;
};

struct ProjectedPair {
  Var s;  // T_s x D'
  Var t;  // T_t x D'
  Var pooled_s;  // 1 x D', masked mean of s
  Var pooled_t;
  std::vector<bool> mask_s;
  std::vector<bool> mask_t;
};

ProjectedPair project_pair(Graph& g, const Projector& speech, const Projector& text, Var h_s,
                           const std::vector<bool>& mask_s, Var h_t, const std::vector<bool>& mask_t);

class InconsistencyClassifier {
 public:
  InconsistencyClassifier() = default;
  InconsistencyClassifier(const FusionConfig& cfg, std::uint64_t seed);

  ProjectedPair project(Graph& g, Var h_s, const std::vector<bool>& mask_s, Var h_t,
                        const std::vector<bool>& mask_t) const;
  // 1 x 1 probability that the pair is inconsistent.
  Var classify(Graph& g, const ProjectedPair& pair) const;
  ParamList parameters();
  const FusionConfig& config() const { return cfg_; }

  Projector speech_projector;
  Projector text_projector;
  nn::Linear hidden;
  nn::LayerNorm norm;
  nn::Linear output;

 private:
  FusionConfig cfg_;
};

// One block per modality: f' = LN(x + SelfAttn(x) + CrossAttn(x, other)),
// f = LN(f' + FFN(f')).
class CrossModalBlock {
 public:
  CrossModalBlock() = default;
  CrossModalBlock(const std::string& name, std::size_t width, std::size_t heads, std::size_t ffn_mult,
                  std::mt19937_64& rng);

  struct Output {
    Var f_s;
    Var f_t;
  };
  Output operator()(Graph& g, Var s, const std::vector<bool>& mask_s, Var t, const std::vector<bool>& mask_t,
                    double dropout) const;
  void collect(ParamList& out);

  struct Side {
    nn::MultiHeadAttention self_attn;
    nn::MultiHeadAttention cross_attn;
    nn::LayerNorm norm1;
    nn::FeedForward ffn;
    nn::LayerNorm norm2;
  };
  Side speech;
  Side text;
};

struct GatedOutput {
  Var h_f;  // 1 x D'
  Var gate_s;  // 1 x 1
  Var gate_t;  // 1 x 1
  Var pooled_s;
  Var pooled_t;
};

struct FusionOutput {
  nn::HeteroscedasticHead::Output prediction;
  GatedOutput gates;
};

class FusionTower {
 public:
  FusionTower() = default;
  FusionTower(const FusionConfig& cfg, std::uint64_t seed);

  // Utterance-level gates: softmax over [pool(f_s) W_s, pool(f_t) W_t].
  GatedOutput gated_fuse(Graph& g, Var f_s, const std::vector<bool>& mask_s, Var f_t,
                         const std::vector<bool>& mask_t) const;
  FusionOutput forward(Graph& g, Var h_s, const std::vector<bool>& mask_s, Var h_t,
                       const std::vector<bool>& mask_t) const;
  ParamList parameters();
  const FusionConfig& config() const { return cfg_; }

  Projector speech_projector;
  Projector text_projector;
  CrossModalBlock block;
  nn::AttentiveStatsPool pool;
  nn::Linear gate_s;
  nn::Linear gate_t;
  nn::HeteroscedasticHead head;

 private:
  FusionConfig cfg_;
};

enum class Decision { consistent, inconsistent };

// Inconsistent iff p_inc >= tau.
Decision decide(double p_inc, double tau);
const char* decision_name(Decision d);

}  // namespace inconvad::fusion

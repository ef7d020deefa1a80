#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "inconvad/autograd.hpp"

// Trainable building blocks shared by the unimodal towers and the Phase B
// heads. Each layer owns its Parameters and appends pointers to them in a
// fixed order through collect().
namespace inconvad::nn {

using ag::Graph;
using ag::ParamGroup;
using ag::ParamList;
using ag::Parameter;
using ag::Var;

// Uniform(-bound, bound) from raw generator bits, identical on every platform.
double uniform(std::mt19937_64& rng, double bound);

Parameter make_weight(std::string name, std::size_t rows, std::size_t cols, ParamGroup group,
                      std::mt19937_64& rng, double bound);
Parameter make_constant(std::string name, std::size_t rows, std::size_t cols, ParamGroup group, double value);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, ParamGroup group, std::mt19937_64& rng,
         bool with_bias = true);

  Var operator()(Graph& g, Var x) const;
  void collect(ParamList& out);
  std::size_t in_features() const { return weight.value.rows(); }
  std::size_t out_features() const { return weight.value.cols(); }

  Parameter weight;  // in x out
  Parameter bias;    // 1 x out (empty when constructed without bias)
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t width, ParamGroup group);

  Var operator()(Graph& g, Var x) const;
  void collect(ParamList& out);

  Parameter gain;
  Parameter bias;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t width, std::size_t heads, ParamGroup group,
                     std::mt19937_64& rng);

  // Queries from `query`, keys/values from `context`; context rows with
  // key_mask false receive zero attention.
  Var operator()(Graph& g, Var query, Var context, const std::vector<bool>& key_mask) const;
  void collect(ParamList& out);

  std::size_t heads = 1;
  Linear q, k, v, o;
};

// Conformer-style half-step feed-forward: LN -> Linear -> Swish -> Linear.
class FeedForward {
 public:
  enum class Activation { swish, gelu };
  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t width, std::size_t hidden, Activation act, bool pre_norm,
              ParamGroup group, std::mt19937_64& rng);

  Var operator()(Graph& g, Var x, double dropout) const;
  void collect(ParamList& out);

  Activation activation = Activation::swish;
  bool pre_norm = true;
  LayerNorm norm;
  Linear up, down;
};

// Pointwise conv + GLU -> depthwise conv -> LN -> Swish -> pointwise conv.
class ConvModule {
 public:
  ConvModule() = default;
  ConvModule(const std::string& name, std::size_t width, std::size_t kernel, ParamGroup group,
             std::mt19937_64& rng);

  Var operator()(Graph& g, Var x, const std::vector<bool>& mask, double dropout) const;
  void collect(ParamList& out);

  LayerNorm norm;
  Linear pointwise_in;
  Parameter depthwise_weight;  // kernel x width
  Parameter depthwise_bias;    // 1 x width
  LayerNorm depthwise_norm;
  Linear pointwise_out;
};

class ConformerBlock {
 public:
  ConformerBlock() = default;
  ConformerBlock(const std::string& name, std::size_t width, std::size_t heads, std::size_t kernel,
                 std::size_t ffn_mult, ParamGroup group, std::mt19937_64& rng);

  Var operator()(Graph& g, Var x, const std::vector<bool>& mask, double dropout) const;
  void collect(ParamList& out);

  FeedForward ffn1;
  LayerNorm attn_norm;
  MultiHeadAttention attn;
  ConvModule conv;
  FeedForward ffn2;
  LayerNorm final_norm;
};

// Post-norm self-attention encoder layer (toy stand-in for a pretrained
// text encoder layer).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(const std::string& name, std::size_t width, std::size_t heads, std::size_t ffn_mult,
               ParamGroup group, std::mt19937_64& rng);

  Var operator()(Graph& g, Var x, const std::vector<bool>& mask, double dropout) const;
  void collect(ParamList& out);

  MultiHeadAttention attn;
  LayerNorm norm1;
  FeedForward ffn;
  LayerNorm norm2;
};

// Attentive statistics pooling: softmax attention over valid frames, then
// the weighted mean and weighted (population) std, projected to out width.
class AttentiveStatsPool {
 public:
  AttentiveStatsPool() = default;
  AttentiveStatsPool(const std::string& name, std::size_t width, std::size_t scorer_hidden, std::size_t out,
                     std::mt19937_64& rng);

  // 1 x 2D vector [mean, std]. With attentive == false the weights are
  // uniform over valid frames and the std half is zeroed (plain mean pool).
  Var statistics(Graph& g, Var x, const std::vector<bool>& mask, bool attentive = true) const;
  Var operator()(Graph& g, Var x, const std::vector<bool>& mask, bool attentive = true) const;
  void collect(ParamList& out);

  Linear scorer_hidden;
  Linear scorer_out;
  Linear projection;
};

// h -> GELU hidden -> (mu, log-variance) with the variance floor applied as
// a hard max in variance space.
class HeteroscedasticHead {
 public:
  HeteroscedasticHead() = default;
  HeteroscedasticHead(const std::string& name, std::size_t width, std::mt19937_64& rng);

  struct Output {
    Var mu;       // 1 x 3
    Var log_var;  // 1 x 3, >= log(kVarianceFloor)
  };
  Output operator()(Graph& g, Var h) const;
  void collect(ParamList& out);

  Linear hidden;
  Linear mean;
  Linear log_variance;
};

// Feature-wise modulation from 3-d token priors: (1 + gamma) * x + delta.
class FiLM {
 public:
  FiLM() = default;
  FiLM(const std::string& name, std::size_t width, std::mt19937_64& rng);

  Var operator()(Graph& g, Var x, Var priors) const;
  void collect(ParamList& out);

  Linear gamma;
  Linear delta;
};

Matrix sinusoidal_positions(std::size_t length, std::size_t width);

}  // namespace inconvad::nn

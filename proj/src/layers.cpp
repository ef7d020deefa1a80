#include "inconvad/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "inconvad/types.hpp"

namespace inconvad::nn {

double uniform(std::mt19937_64& rng, double bound) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * bound;
}

Parameter make_weight(std::string name, std::size_t rows, std::size_t cols, ParamGroup group,
                      std::mt19937_64& rng, double bound) {
  Parameter p{std::move(name), Matrix(rows, cols), group, true};
  for (double& v : p.value.flat()) v = uniform(rng, bound);
  return p;
}

Parameter make_constant(std::string name, std::size_t rows, std::size_t cols, ParamGroup group, double value) {
  return Parameter{std::move(name), Matrix(rows, cols, value), group, false};
}

// ------------------------------------------------------------------ Linear

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, ParamGroup group, std::mt19937_64& rng,
               bool with_bias)
    : weight(make_weight(name + ".weight", in, out, group, rng, 1.0 / std::sqrt(static_cast<double>(in)))) {
  if (with_bias) bias = make_constant(name + ".bias", 1, out, group, 0.0);
}

Var Linear::operator()(Graph& g, Var x) const {
  Var y = ag::matmul(x, g.param(weight));
  if (!bias.value.empty()) y = ag::add_row(y, g.param(bias));
  return y;
}

void Linear::collect(ParamList& out) {
  out.push_back(&weight);
  if (!bias.value.empty()) out.push_back(&bias);
}

// --------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, std::size_t width, ParamGroup group)
    : gain(make_constant(name + ".gain", 1, width, group, 1.0)),
      bias(make_constant(name + ".bias", 1, width, group, 0.0)) {}

Var LayerNorm::operator()(Graph& g, Var x) const { return ag::layer_norm(x, g.param(gain), g.param(bias)); }

void LayerNorm::collect(ParamList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

// ------------------------------------------------------ MultiHeadAttention

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t width, std::size_t n_heads,
                                       ParamGroup group, std::mt19937_64& rng)
    : heads(n_heads),
      q(name + ".q", width, width, group, rng),
      k(name + ".k", width, width, group, rng),
      v(name + ".v", width, width, group, rng),
      o(name + ".o", width, width, group, rng) {
  if (n_heads == 0 || width % n_heads != 0) throw std::invalid_argument("attention width not divisible by heads");
}

Var MultiHeadAttention::operator()(Graph& g, Var query, Var context, const std::vector<bool>& key_mask) const {
  const std::size_t width = q.out_features();
  const std::size_t dk = width / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Var qs = q(g, query);
  Var ks = k(g, context);
  Var vs = v(g, context);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = ag::slice_cols(qs, h * dk, dk);
    Var kh = ag::slice_cols(ks, h * dk, dk);
    Var vh = ag::slice_cols(vs, h * dk, dk);
    Var weights = ag::masked_softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_scale), key_mask);
    outs.push_back(ag::matmul(weights, vh));
  }
  Var joined = heads == 1 ? outs.front() : ag::concat_cols(outs);
  return o(g, joined);
}

void MultiHeadAttention::collect(ParamList& out) {
  q.collect(out);
  k.collect(out);
  v.collect(out);
  o.collect(out);
}

// ------------------------------------------------------------- FeedForward

FeedForward::FeedForward(const std::string& name, std::size_t width, std::size_t hidden_width, Activation act,
                         bool use_pre_norm, ParamGroup group, std::mt19937_64& rng)
    : activation(act),
      pre_norm(use_pre_norm),
      norm(name + ".norm", width, group),
      up(name + ".up", width, hidden_width, group, rng),
      down(name + ".down", hidden_width, width, group, rng) {}

Var FeedForward::operator()(Graph& g, Var x, double dropout) const {
  Var h = pre_norm ? norm(g, x) : x;
  h = up(g, h);
  h = activation == Activation::swish ? ag::swish(h) : ag::gelu(h);
  h = ag::dropout(h, dropout);
  return ag::dropout(down(g, h), dropout);
}

void FeedForward::collect(ParamList& out) {
  if (pre_norm) norm.collect(out);
  up.collect(out);
  down.collect(out);
}

// -------------------------------------------------------------- ConvModule

ConvModule::ConvModule(const std::string& name, std::size_t width, std::size_t kernel, ParamGroup group,
                       std::mt19937_64& rng)
    : norm(name + ".norm", width, group),
      pointwise_in(name + ".pointwise_in", width, 2 * width, group, rng),
      depthwise_weight(make_weight(name + ".depthwise.weight", kernel, width, group, rng,
                                   1.0 / std::sqrt(static_cast<double>(kernel)))),
      depthwise_bias(make_constant(name + ".depthwise.bias", 1, width, group, 0.0)),
      depthwise_norm(name + ".depthwise_norm", width, group),
      pointwise_out(name + ".pointwise_out", width, width, group, rng) {
  if (kernel % 2 == 0) throw std::invalid_argument("convolution kernel must be odd");
}

Var ConvModule::operator()(Graph& g, Var x, const std::vector<bool>& mask, double dropout) const {
  Var h = ag::glu(pointwise_in(g, norm(g, x)));
  h = ag::mask_rows(h, mask);
  h = ag::depthwise_conv1d(h, g.param(depthwise_weight), g.param(depthwise_bias));
  h = ag::swish(depthwise_norm(g, h));
  return ag::dropout(pointwise_out(g, h), dropout);
}

void ConvModule::collect(ParamList& out) {
  norm.collect(out);
  pointwise_in.collect(out);
  out.push_back(&depthwise_weight);
  out.push_back(&depthwise_bias);
  depthwise_norm.collect(out);
  pointwise_out.collect(out);
}

// ---------------------------------------------------------- ConformerBlock

ConformerBlock::ConformerBlock(const std::string& name, std::size_t width, std::size_t heads, std::size_t kernel,
                               std::size_t ffn_mult, ParamGroup group, std::mt19937_64& rng)
    : ffn1(name + ".ffn1", width, ffn_mult * width, FeedForward::Activation::swish, true, group, rng),
      attn_norm(name + ".attn_norm", width, group),
      attn(name + ".attn", width, heads, group, rng),
      conv(name + ".conv", width, kernel, group, rng),
      ffn2(name + ".ffn2", width, ffn_mult * width, FeedForward::Activation::swish, true, group, rng),
      final_norm(name + ".final_norm", width, group) {}

Var ConformerBlock::operator()(Graph& g, Var x, const std::vector<bool>& mask, double dropout) const {
  x = ag::mask_rows(x, mask);
  x = ag::add(x, ag::scale(ffn1(g, x, dropout), 0.5));
  Var normed = attn_norm(g, x);
  x = ag::add(x, ag::dropout(attn(g, normed, normed, mask), dropout));
  x = ag::add(x, conv(g, x, mask, dropout));
  x = ag::add(x, ag::scale(ffn2(g, x, dropout), 0.5));
  return final_norm(g, x);
}

void ConformerBlock::collect(ParamList& out) {
  ffn1.collect(out);
  attn_norm.collect(out);
  attn.collect(out);
  conv.collect(out);
  ffn2.collect(out);
  final_norm.collect(out);
}

// ------------------------------------------------------------ EncoderLayer

EncoderLayer::EncoderLayer(const std::string& name, std::size_t width, std::size_t heads, std::size_t ffn_mult,
                           ParamGroup group, std::mt19937_64& rng)
    : attn(name + ".attn", width, heads, group, rng),
      norm1(name + ".norm1", width, group),
      ffn(name + ".ffn", width, ffn_mult * width, FeedForward::Activation::gelu, false, group, rng),
      norm2(name + ".norm2", width, group) {}

Var EncoderLayer::operator()(Graph& g, Var x, const std::vector<bool>& mask, double dropout) const {
  x = ag::mask_rows(x, mask);
  x = norm1(g, ag::add(x, ag::dropout(attn(g, x, x, mask), dropout)));
  return norm2(g, ag::add(x, ffn(g, x, dropout)));
}

void EncoderLayer::collect(ParamList& out) {
  attn.collect(out);
  norm1.collect(out);
  ffn.collect(out);
  norm2.collect(out);
}

// ------------------------------------------------------ AttentiveStatsPool

AttentiveStatsPool::AttentiveStatsPool(const std::string& name, std::size_t width, std::size_t hidden,
                                       std::size_t out, std::mt19937_64& rng)
    : scorer_hidden(name + ".scorer_hidden", width, hidden, ParamGroup::heads, rng),
      scorer_out(name + ".scorer_out", hidden, 1, ParamGroup::heads, rng),
      projection(name + ".projection", 2 * width, out, ParamGroup::heads, rng) {}

Var AttentiveStatsPool::statistics(Graph& g, Var x, const std::vector<bool>& mask, bool attentive) const {
  if (mask.size() != x.rows()) throw std::invalid_argument("aspool: mask length mismatch");
  std::size_t valid = 0;
  for (bool m : mask) valid += m ? 1 : 0;
  if (valid == 0) throw std::invalid_argument("aspool: no valid frames");
  x = ag::mask_rows(x, mask);
  if (!attentive) {
    Var mean = ag::masked_mean_rows(x, mask);
    return ag::concat_cols({mean, g.constant(Matrix(1, x.cols()))});
  }
  Var logits = scorer_out(g, ag::tanh(scorer_hidden(g, x)));  // T x 1
  Var weights = ag::masked_softmax_rows(ag::transpose(logits), mask);  // 1 x T
  Var mean = ag::matmul(weights, x);
  Var second = ag::matmul(weights, ag::square(x));
  Var var = ag::sub(second, ag::square(mean));
  Var stdev = ag::sqrt(ag::clamp_min(var, 1e-8));
  return ag::concat_cols({mean, stdev});
}

Var AttentiveStatsPool::operator()(Graph& g, Var x, const std::vector<bool>& mask, bool attentive) const {
  return projection(g, statistics(g, x, mask, attentive));
}

void AttentiveStatsPool::collect(ParamList& out) {
  scorer_hidden.collect(out);
  scorer_out.collect(out);
  projection.collect(out);
}

// ----------------------------------------------------- HeteroscedasticHead

HeteroscedasticHead::HeteroscedasticHead(const std::string& name, std::size_t width, std::mt19937_64& rng)
    : hidden(name + ".hidden", width, width, ParamGroup::heads, rng),
      mean(name + ".mean", width, 3, ParamGroup::heads, rng),
      log_variance(name + ".log_variance", width, 3, ParamGroup::heads, rng) {
  // Start at the centre of the label cube with a moderate variance.
  mean.bias.value.fill(0.5);
  log_variance.bias.value.fill(std::log(0.05));
}

HeteroscedasticHead::Output HeteroscedasticHead::operator()(Graph& g, Var h) const {
  Var z = ag::gelu(hidden(g, h));
  Var mu = mean(g, z);
  Var raw = log_variance(g, z);
  return {mu, ag::clamp_min(raw, std::log(kVarianceFloor))};
}

void HeteroscedasticHead::collect(ParamList& out) {
  hidden.collect(out);
  mean.collect(out);
  log_variance.collect(out);
}

// -------------------------------------------------------------------- FiLM

FiLM::FiLM(const std::string& name, std::size_t width, std::mt19937_64& rng)
    : gamma(name + ".gamma", 3, width, ParamGroup::backbone, rng),
      delta(name + ".delta", 3, width, ParamGroup::backbone, rng) {
  for (double& w : gamma.weight.value.flat()) w *= 0.2;
  for (double& w : delta.weight.value.flat()) w *= 0.2;
}

Var FiLM::operator()(Graph& g, Var x, Var priors) const {
  if (priors.rows() != x.rows() || priors.cols() != 3) throw std::invalid_argument("film: prior length mismatch");
  Var scale_term = gamma(g, priors);
  Var shift = delta(g, priors);
  return ag::add(ag::add(x, ag::mul(scale_term, x)), shift);
}

void FiLM::collect(ParamList& out) {
  gamma.collect(out);
  delta.collect(out);
}

Matrix sinusoidal_positions(std::size_t length, std::size_t width) {
  Matrix pe(length, width);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < width; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
      const double angle = static_cast<double>(t) / std::pow(10000.0, expo);
      pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace inconvad::nn

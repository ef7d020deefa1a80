#include "inconvad/fusion_classifier.hpp"

#include <algorithm>
#include <stdexcept>

namespace inconvad::fusion {

using ag::ParamGroup;

void FusionConfig::validate() const {
  if (input_width == 0) throw ConfigError("input_width must be positive");
  if (proj_width == 0 || n_heads == 0 || proj_width % n_heads != 0)
    throw ConfigError("proj_width must be a positive multiple of n_heads");
  if (ffn_mult == 0) throw ConfigError("ffn_mult must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

KeyValues FusionConfig::to_key_values() const {
  KeyValues kv;
  kv.set("input_width", std::to_string(input_width));
  kv.set("proj_width", std::to_string(proj_width));
  kv.set("n_heads", std::to_string(n_heads));
  kv.set("ffn_mult", std::to_string(ffn_mult));
  kv.set("dropout", format_double(dropout));
  kv.set("transformer_block", transformer_block ? "true" : "false");
  kv.set("gated_fusion", gated_fusion ? "true" : "false");
  return kv;
}

FusionConfig FusionConfig::from_key_values(const KeyValues& kv) {
  FusionConfig c;
  auto size = [&kv](const char* key, std::size_t fallback) {
    const long long v = kv.get_int_or(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.input_width = size("input_width", c.input_width);
  c.proj_width = size("proj_width", c.proj_width);
  c.n_heads = size("n_heads", c.n_heads);
  c.ffn_mult = size("ffn_mult", c.ffn_mult);
  c.dropout = kv.get_double_or("dropout", c.dropout);
  c.transformer_block = kv.get_bool_or("transformer_block", c.transformer_block);
  c.gated_fusion = kv.get_bool_or("gated_fusion", c.gated_fusion);
  c.validate();
  return c;
}

// --------------------------------------------------------------- Projector

Projector::Projector(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
    : linear(name + ".linear", in, out, ParamGroup::heads, rng), norm(name + ".norm", out, ParamGroup::heads) {}

Var Projector::operator()(Graph& g, Var x) const {
  if (x.cols() != linear.in_features()) throw std::invalid_argument("projector: input width mismatch");
  return norm(g, linear(g, x));
}

void Projector::collect(ParamList& out) {
  linear.collect(out);
  norm.collect(out);
}

ProjectedPair project_pair(Graph& g, const Projector& speech, const Projector& text, Var h_s,
                           const std::vector<bool>& mask_s, Var h_t, const std::vector<bool>& mask_t) {
  if (mask_s.size() != h_s.rows() || mask_t.size() != h_t.rows())
    throw std::invalid_argument("project_pair: mask length mismatch");
  ProjectedPair p;
  p.s = ag::mask_rows(speech(g, h_s), mask_s);
  p.t = ag::mask_rows(text(g, h_t), mask_t);
  p.pooled_s = ag::masked_mean_rows(p.s, mask_s);
  p.pooled_t = ag::masked_mean_rows(p.t, mask_t);
  p.mask_s = mask_s;
  p.mask_t = mask_t;
  return p;
}

// ------------------------------------------------- InconsistencyClassifier

InconsistencyClassifier::InconsistencyClassifier(const FusionConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t D = cfg_.proj_width;
  speech_projector = Projector("classifier.speech_projector", cfg_.input_width, D, rng);
  text_projector = Projector("classifier.text_projector", cfg_.input_width, D, rng);
  hidden = nn::Linear("classifier.hidden", 2 * D, D, ParamGroup::heads, rng);
  norm = nn::LayerNorm("classifier.norm", D, ParamGroup::heads);
  output = nn::Linear("classifier.output", D, 1, ParamGroup::heads, rng);
}

ProjectedPair InconsistencyClassifier::project(Graph& g, Var h_s, const std::vector<bool>& mask_s, Var h_t,
                                               const std::vector<bool>& mask_t) const {
  return project_pair(g, speech_projector, text_projector, h_s, mask_s, h_t, mask_t);
}

Var InconsistencyClassifier::classify(Graph& g, const ProjectedPair& pair) const {
  Var joined = ag::concat_cols({pair.pooled_s, pair.pooled_t});
  Var z = ag::dropout(ag::gelu(hidden(g, joined)), cfg_.dropout);
  return ag::sigmoid(output(g, norm(g, z)));
}

ParamList InconsistencyClassifier::parameters() {
  ParamList out;
  speech_projector.collect(out);
  text_projector.collect(out);
  hidden.collect(out);
  norm.collect(out);
  output.collect(out);
  return out;
}

// ---------------------------------------------------------- CrossModalBlock

CrossModalBlock::CrossModalBlock(const std::string& name, std::size_t width, std::size_t heads,
                                 std::size_t ffn_mult, std::mt19937_64& rng) {
  auto make = [&](const std::string& side) {
    Side s;
    s.self_attn = nn::MultiHeadAttention(name + "." + side + ".self_attn", width, heads, ParamGroup::heads, rng);
    s.cross_attn = nn::MultiHeadAttention(name + "." + side + ".cross_attn", width, heads, ParamGroup::heads, rng);
    s.norm1 = nn::LayerNorm(name + "." + side + ".norm1", width, ParamGroup::heads);
    s.ffn = nn::FeedForward(name + "." + side + ".ffn", width, width * ffn_mult, nn::FeedForward::Activation::gelu,
                            false, ParamGroup::heads, rng);
    s.norm2 = nn::LayerNorm(name + "." + side + ".norm2", width, ParamGroup::heads);
    return s;
  };
  speech = make("speech");
  text = make("text");
}

CrossModalBlock::Output CrossModalBlock::operator()(Graph& g, Var s, const std::vector<bool>& mask_s, Var t,
                                                    const std::vector<bool>& mask_t, double dropout) const {
  if (s.cols() != t.cols()) throw std::invalid_argument("crossmodal_block: widths differ");
  s = ag::mask_rows(s, mask_s);
  t = ag::mask_rows(t, mask_t);
  auto run = [&](const Side& side, Var x, const std::vector<bool>& own, Var other,
                 const std::vector<bool>& other_mask) {
    Var self = ag::dropout(side.self_attn(g, x, x, own), dropout);
    Var cross = ag::dropout(side.cross_attn(g, x, other, other_mask), dropout);
    Var mid = side.norm1(g, ag::add(ag::add(x, self), cross));
    return side.norm2(g, ag::add(mid, side.ffn(g, mid, dropout)));
  };
  return {run(speech, s, mask_s, t, mask_t), run(text, t, mask_t, s, mask_s)};
}

void CrossModalBlock::collect(ParamList& out) {
  for (Side* side : {&speech, &text}) {
    side->self_attn.collect(out);
    side->cross_attn.collect(out);
    side->norm1.collect(out);
    side->ffn.collect(out);
    side->norm2.collect(out);
  }
}

// -------------------------------------------------------------- FusionTower

FusionTower::FusionTower(const FusionConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t D = cfg_.proj_width;
  speech_projector = Projector("fusion.speech_projector", cfg_.input_width, D, rng);
  text_projector = Projector("fusion.text_projector", cfg_.input_width, D, rng);
  block = CrossModalBlock("fusion.block", D, cfg_.n_heads, cfg_.ffn_mult, rng);
  pool = nn::AttentiveStatsPool("fusion.pool", D, std::max<std::size_t>(4, D / 2), D, rng);
  gate_s = nn::Linear("fusion.gate_s", D, 1, ParamGroup::heads, rng, false);
  gate_t = nn::Linear("fusion.gate_t", D, 1, ParamGroup::heads, rng, false);
  head = nn::HeteroscedasticHead("fusion.head", D, rng);
}

GatedOutput FusionTower::gated_fuse(Graph& g, Var f_s, const std::vector<bool>& mask_s, Var f_t,
                                    const std::vector<bool>& mask_t) const {
  GatedOutput out;
  out.pooled_s = pool(g, f_s, mask_s);
  out.pooled_t = pool(g, f_t, mask_t);
  if (cfg_.gated_fusion) {
    Var logits = ag::concat_cols({gate_s(g, out.pooled_s), gate_t(g, out.pooled_t)});
    Var gates = ag::masked_softmax_rows(logits, {true, true});
    out.gate_s = ag::slice_cols(gates, 0, 1);
    out.gate_t = ag::slice_cols(gates, 1, 1);
  } else {
    out.gate_s = g.constant(Matrix::row_vector({0.5}));
    out.gate_t = g.constant(Matrix::row_vector({0.5}));
  }
  out.h_f = ag::add(ag::mul_col(out.pooled_s, out.gate_s), ag::mul_col(out.pooled_t, out.gate_t));
  return out;
}

FusionOutput FusionTower::forward(Graph& g, Var h_s, const std::vector<bool>& mask_s, Var h_t,
                                  const std::vector<bool>& mask_t) const {
  const ProjectedPair p = project_pair(g, speech_projector, text_projector, h_s, mask_s, h_t, mask_t);
  Var f_s = p.s;
  Var f_t = p.t;
  if (cfg_.transformer_block) {
    const auto blocked = block(g, p.s, mask_s, p.t, mask_t, cfg_.dropout);
    f_s = blocked.f_s;
    f_t = blocked.f_t;
  }
  FusionOutput out;
  out.gates = gated_fuse(g, f_s, mask_s, f_t, mask_t);
  out.prediction = head(g, out.gates.h_f);
  return out;
}

ParamList FusionTower::parameters() {
  ParamList out;
  speech_projector.collect(out);
  text_projector.collect(out);
  if (cfg_.transformer_block) block.collect(out);
  pool.collect(out);
  if (cfg_.gated_fusion) {
    gate_s.collect(out);
    gate_t.collect(out);
  }
  head.collect(out);
  return out;
}

Decision decide(double p_inc, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("decision threshold must be in [0, 1]");
  return p_inc >= tau ? Decision::inconsistent : Decision::consistent;
}

const char* decision_name(Decision d) { return d == Decision::consistent ? "consistent" : "inconsistent"; }

}  // namespace inconvad::fusion

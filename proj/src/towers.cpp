#include "inconvad/towers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace inconvad::towers {

// ------------------------------------------------------------- TowerConfig

void TowerConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("d_model must be a positive multiple of n_heads");
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (ffn_mult == 0) throw ConfigError("ffn_mult must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (vocab_buckets < 2) throw ConfigError("vocab_buckets must be at least 2");
  if (fbank_bands == 0) throw ConfigError("fbank_bands must be positive");
}

KeyValues TowerConfig::to_key_values() const {
  KeyValues kv;
  kv.set("d_model", std::to_string(d_model));
  kv.set("n_conformer", std::to_string(n_conformer));
  kv.set("n_heads", std::to_string(n_heads));
  kv.set("conv_kernel", std::to_string(conv_kernel));
  kv.set("ffn_mult", std::to_string(ffn_mult));
  kv.set("dropout", format_double(dropout));
  kv.set("prosody_injection", prosody_injection ? "true" : "false");
  kv.set("film_gating", film_gating ? "true" : "false");
  kv.set("aspool", aspool ? "true" : "false");
  kv.set("n_encoder_layers", std::to_string(n_encoder_layers));
  kv.set("vocab_buckets", std::to_string(vocab_buckets));
  kv.set("acoustic_width", std::to_string(acoustic_width));
  kv.set("fbank_bands", std::to_string(fbank_bands));
  return kv;
}

TowerConfig TowerConfig::from_key_values(const KeyValues& kv) {
  TowerConfig c;
  c.d_model = static_cast<std::size_t>(kv.get_int_or("d_model", static_cast<long long>(c.d_model)));
  c.n_conformer = static_cast<std::size_t>(kv.get_int_or("n_conformer", static_cast<long long>(c.n_conformer)));
  c.n_heads = static_cast<std::size_t>(kv.get_int_or("n_heads", static_cast<long long>(c.n_heads)));
  c.conv_kernel = static_cast<std::size_t>(kv.get_int_or("conv_kernel", static_cast<long long>(c.conv_kernel)));
  c.ffn_mult = static_cast<std::size_t>(kv.get_int_or("ffn_mult", static_cast<long long>(c.ffn_mult)));
  c.dropout = kv.get_double_or("dropout", c.dropout);
  c.prosody_injection = kv.get_bool_or("prosody_injection", c.prosody_injection);
  c.film_gating = kv.get_bool_or("film_gating", c.film_gating);
  c.aspool = kv.get_bool_or("aspool", c.aspool);
  c.n_encoder_layers =
      static_cast<std::size_t>(kv.get_int_or("n_encoder_layers", static_cast<long long>(c.n_encoder_layers)));
  c.vocab_buckets = static_cast<std::size_t>(kv.get_int_or("vocab_buckets", static_cast<long long>(c.vocab_buckets)));
  c.acoustic_width =
      static_cast<std::size_t>(kv.get_int_or("acoustic_width", static_cast<long long>(c.acoustic_width)));
  c.fbank_bands = static_cast<std::size_t>(kv.get_int_or("fbank_bands", static_cast<long long>(c.fbank_bands)));
  c.validate();
  return c;
}

double floor_log_variance(double raw_log_var) { return std::max(raw_log_var, std::log(kVarianceFloor)); }

GaussianVad to_gaussian(const nn::HeteroscedasticHead::Output& out) {
  GaussianVad g;
  const Matrix& mu = out.mu.value();
  const Matrix& lv = out.log_var.value();
  for (std::size_t k = 0; k < 3; ++k) {
    g.mu[k] = mu[k];
    g.log_var[k] = lv[k];
  }
  return g;
}

namespace {
std::size_t scorer_width(std::size_t d_model) { return std::max<std::size_t>(4, d_model / 2); }
}  // namespace

// ------------------------------------------------------------------ speech

SpeechInput prepare_speech(const Waveform& w, const TowerConfig& cfg, const prosody::ProsodyConfig& pcfg) {
  features::FilterbankConfig fcfg;
  fcfg.frame_ms = pcfg.frame_ms;
  fcfg.hop_ms = pcfg.hop_ms;
  fcfg.n_mels = cfg.fbank_bands;
  SpeechInput in;
  in.acoustic = features::log_mel_filterbank(w, fcfg);
  for (double& v : in.acoustic.flat()) v = (v - kFbankOffset) / kFbankScale;
  in.prosody = prosody::extract_prosody(w, pcfg, in.acoustic.rows()).as_matrix();
  in.mask.assign(in.acoustic.rows(), true);
  return in;
}

SpeechInput prepare_speech_precomputed(const FeatureSequence& acoustic, const Waveform& w, const TowerConfig& cfg,
                                       const prosody::ProsodyConfig& pcfg) {
  acoustic.validate();
  if (acoustic.width() != cfg.acoustic_width)
    throw features::FeatureArchiveError("precomputed feature width does not match acoustic_width");
  SpeechInput in;
  in.acoustic = acoustic.frames;
  in.prosody = prosody::extract_prosody(w, pcfg, acoustic.length()).as_matrix();
  in.mask = acoustic.mask;
  in.precomputed = true;
  return in;
}

SpeechTower::SpeechTower(const TowerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t D = cfg_.d_model;
  std::size_t acoustic = cfg_.acoustic_width;
  if (acoustic == 0) {
    encoder = nn::Linear("speech.encoder", cfg_.fbank_bands, D, ag::ParamGroup::backbone, rng);
    acoustic = D;
  }
  input_projection = nn::Linear("speech.input_projection", acoustic + 2, D, ag::ParamGroup::heads, rng);
  for (std::size_t i = 0; i < cfg_.n_conformer; ++i)
    conformer.emplace_back("speech.conformer." + std::to_string(i), D, cfg_.n_heads, cfg_.conv_kernel,
                           cfg_.ffn_mult, ag::ParamGroup::backbone, rng);
  pool = nn::AttentiveStatsPool("speech.pool", D, scorer_width(D), D, rng);
  head = nn::HeteroscedasticHead("speech.head", D, rng);
}

Var SpeechTower::encode(Graph& g, const SpeechInput& in) const {
  if (in.precomputed != (cfg_.acoustic_width != 0))
    throw std::invalid_argument("speech input kind does not match tower configuration");
  Var x = g.constant(in.acoustic);
  if (in.precomputed) return x;
  if (in.acoustic.cols() != cfg_.fbank_bands) throw std::invalid_argument("filterbank width mismatch");
  return encoder(g, x);
}

TowerOutput SpeechTower::forward(Graph& g, const SpeechInput& in) const {
  if (in.prosody.rows() != in.frames() || in.mask.size() != in.frames())
    throw std::invalid_argument("speech input frame counts disagree");
  Var acoustic = encode(g, in);
  Var pros = g.constant(cfg_.prosody_injection ? in.prosody : Matrix(in.frames(), 2));
  Var x = input_projection(g, ag::concat_cols({acoustic, pros}));
  for (const auto& block : conformer) x = block(g, x, in.mask, cfg_.dropout);
  Var h = pool(g, x, in.mask, cfg_.aspool);
  return {h, head(g, h), x, in.mask};
}

ParamList SpeechTower::parameters() {
  ParamList out;
  if (cfg_.acoustic_width == 0) encoder.collect(out);
  input_projection.collect(out);
  for (auto& b : conformer) b.collect(out);
  pool.collect(out);
  head.collect(out);
  return out;
}

FeatureSequence toy_speech_encoder(const SpeechTower& tower, const Waveform& w) {
  const SpeechInput in = prepare_speech(w, tower.config());
  Graph g;
  return FeatureSequence(tower.encode(g, in).value());
}

// -------------------------------------------------------------------- text

std::size_t token_bucket(const std::string& token, std::size_t buckets) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : to_lower(token)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h % buckets);
}

TextInput prepare_text(const std::vector<std::string>& tokens, const lexicon::VadLexicon& lex, const TowerConfig& cfg) {
  if (tokens.empty()) throw std::invalid_argument("text tower requires at least one token");
  TextInput in;
  for (const auto& t : tokens) in.ids.push_back(token_bucket(t, cfg.vocab_buckets));
  const auto priors = lexicon::priors_for_tokens(tokens, lex);
  in.priors = priors.as_matrix();
  in.coverage = priors.coverage;
  in.mask.assign(tokens.size(), true);
  return in;
}

TextTower::TextTower(const TowerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t D = cfg_.d_model;
  embedding = nn::make_weight("text.embedding", cfg_.vocab_buckets, D, ag::ParamGroup::backbone, rng, 1.0);
  embedding.decay = false;
  for (std::size_t i = 0; i < cfg_.n_encoder_layers; ++i)
    encoder.emplace_back("text.encoder." + std::to_string(i), D, cfg_.n_heads, cfg_.ffn_mult,
                         ag::ParamGroup::backbone, rng);
  film = nn::FiLM("text.film", D, rng);
  pool = nn::AttentiveStatsPool("text.pool", D, scorer_width(D), D, rng);
  head = nn::HeteroscedasticHead("text.head", D, rng);
}

TowerOutput TextTower::forward(Graph& g, const TextInput& in) const {
  if (in.ids.empty()) throw std::invalid_argument("text tower requires at least one token");
  if (in.priors.rows() != in.ids.size() || in.mask.size() != in.ids.size())
    throw std::invalid_argument("text input lengths disagree");
  Var x = ag::embedding(g.param(embedding), in.ids);
  x = ag::add_const(x, nn::sinusoidal_positions(in.ids.size(), cfg_.d_model));
  for (const auto& layer : encoder) x = layer(g, x, in.mask, cfg_.dropout);
  if (cfg_.film_gating) x = film(g, x, g.constant(in.priors));
  Var h = pool(g, x, in.mask, cfg_.aspool);
  return {h, head(g, h), x, in.mask};
}

ParamList TextTower::parameters() {
  ParamList out{&embedding};
  for (auto& l : encoder) l.collect(out);
  film.collect(out);
  pool.collect(out);
  head.collect(out);
  return out;
}

}  // namespace inconvad::towers

#include "inconvad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "inconvad/checkpoint.hpp"
#include "inconvad/features.hpp"
#include "inconvad/losses.hpp"
#include "inconvad/optim.hpp"
#include "inconvad/parallel.hpp"
#include "inconvad/wav.hpp"

namespace inconvad::pipeline {

using ag::Graph;
using ag::ParamList;
using ag::Var;
using nlohmann::json;

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

void shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * static_cast<double>(i));
    std::swap(v[i - 1], v[j]);
  }
}

const char* group_name(ag::ParamGroup g) { return g == ag::ParamGroup::backbone ? "backbone" : "heads"; }

GaussianVad to_gaussian(const nn::HeteroscedasticHead::Output& out) { return towers::to_gaussian(out); }

// ------------------------------------------------------------------ Trainer

// One sample's loss; `parts` receives its named components.
using SampleLoss = std::function<Var(Graph&, std::size_t, std::map<std::string, double>&)>;

class Trainer {
 public:
  Trainer(ParamList params, const TrainConfig& cfg, double lr_backbone, double lr_heads, std::size_t n_train)
      : params_(std::move(params)),
        cfg_(cfg),
        opt_(params_, optim::AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay}),
        lr_backbone_(lr_backbone),
        lr_heads_(lr_heads),
        threads_(resolve_threads(cfg.threads)) {
    steps_per_epoch_ = (n_train + cfg.batch_size - 1) / cfg.batch_size;
    total_steps_ = steps_per_epoch_ * cfg.max_epochs;
  }

  std::map<std::string, double> epoch(std::size_t epoch_index, std::size_t n, const SampleLoss& loss) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, derive(cfg_.seed, 0xE90C, epoch_index));

    std::map<std::string, double> sums;
    std::vector<std::map<std::string, double>> parts(cfg_.batch_size);
    for (std::size_t start = 0; start < n; start += cfg_.batch_size) {
      const std::size_t count = std::min(cfg_.batch_size, n - start);
      const double inv = 1.0 / static_cast<double>(count);
      const std::size_t workers = std::min(threads_, count);
      std::vector<ag::GradStore> stores(workers);
      parallel_chunks(count, workers, [&](std::size_t b, std::size_t e, std::size_t w) {
        for (std::size_t k = b; k < e; ++k) {
          const std::size_t idx = order[start + k];
          Graph g(true, derive(cfg_.seed, epoch_index, idx + 1));
          parts[k].clear();
          Var l = loss(g, idx, parts[k]);
          if (!std::isfinite(l.scalar()))
            throw std::runtime_error("non-finite training loss at sample " + std::to_string(idx) + " in epoch " +
                                     std::to_string(epoch_index));
          parts[k]["loss"] = l.scalar();
          g.backward(ag::scale(l, inv), stores[w]);
        }
      });
      ag::GradStore total;
      for (const auto& s : stores) total.accumulate(s, params_);
      optim::clip_grad_norm(total, params_, cfg_.grad_clip);
      const double scale = optim::warmup_cosine(step_, total_steps_, cfg_.warmup_fraction, 1.0);
      last_lr_ = scale * lr_heads_;
      opt_.step(total, scale * lr_backbone_, scale * lr_heads_);
      ++step_;
      for (std::size_t k = 0; k < count; ++k)
        for (const auto& [name, v] : parts[k]) sums[name] += v;
    }
    for (auto& [name, v] : sums) v /= static_cast<double>(n);
    return sums;
  }

  double last_lr() const { return last_lr_; }

  std::vector<Matrix> snapshot() const {
    std::vector<Matrix> out;
    for (const auto* p : params_) out.push_back(p->value);
    return out;
  }
  void restore(const std::vector<Matrix>& values) {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->value = values[i];
  }

 private:
  ParamList params_;
  TrainConfig cfg_;
  optim::AdamW opt_;
  double lr_backbone_;
  double lr_heads_;
  std::size_t threads_;
  std::size_t steps_per_epoch_ = 0;
  std::size_t total_steps_ = 0;
  std::size_t step_ = 0;
  double last_lr_ = 0.0;
};

// Validation returns (selection metric, extra named values).
using Validator = std::function<std::pair<double, std::map<std::string, double>>()>;

RunLog fit(const std::string& phase, ParamList params, const TrainConfig& cfg, double lr_backbone, double lr_heads,
           std::size_t n_train, const SampleLoss& loss, const Validator& validate) {
  cfg.validate();
  if (n_train == 0) throw std::runtime_error(phase + ": empty training split");
  RunLog log;
  log.phase = phase;
  log.config = cfg.to_key_values();
  for (const auto* p : params) log.param_groups.emplace_back(p->name, group_name(p->group));
  Trainer trainer(params, cfg, lr_backbone, lr_heads, n_train);
  optim::EarlyStopping stopper(cfg.patience);
  std::vector<Matrix> best = trainer.snapshot();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = trainer.epoch(epoch, n_train, loss);
    auto [metric, extra] = validate();
    rec.val_metric = metric;
    rec.val = std::move(extra);
    rec.lr = trainer.last_lr();
    spdlog::info("{} epoch {} loss {:.5f} val {:.5f}", phase, epoch, rec.train["loss"], metric);
    log.epochs.push_back(std::move(rec));
    if (stopper.update(epoch, metric)) best = trainer.snapshot();
    if (stopper.should_stop()) {
      log.stopped_early = true;
      break;
    }
  }
  trainer.restore(best);
  log.best_epoch = stopper.best_epoch();
  log.best_metric = stopper.best_metric();
  return log;
}

template <class Tower, class Input>
std::vector<GaussianVad> predict_tower(const Tower& tower, const Dataset& data, std::size_t threads,
                                       Input Example::*member) {
  std::vector<GaussianVad> out(data.size());
  parallel_chunks(data.size(), resolve_threads(threads), [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      Graph g;
      out[i] = to_gaussian(tower.forward(g, data[i].*member).prediction);
    }
  });
  return out;
}

void require_labels(const Dataset& data, const std::string& what) {
  for (const auto& ex : data)
    if (!ex.vad) throw std::runtime_error(what + ": record " + ex.id + " has no VAD label");
}

std::map<std::string, double> ccc_extras(const std::array<double, 3>& c) {
  std::map<std::string, double> m;
  for (std::size_t k = 0; k < 3; ++k) m[std::string("ccc.") + kVadNames[k]] = c[k];
  return m;
}

json gaussian_json(const GaussianVad& g) {
  return {{"mu", {g.mu.v, g.mu.a, g.mu.d}}, {"log_var", {g.log_var[0], g.log_var[1], g.log_var[2]}}};
}

json vad_json(const VadVector& v) { return json::array({v.v, v.a, v.d}); }

}  // namespace

// --------------------------------------------------------------- configs

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (!(lr_backbone > 0 && lr_heads > 0 && lr_classifier > 0)) throw ConfigError("learning rates must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 0.5)) throw ConfigError("warmup_fraction must be in [0, 0.5]");
  if (schedule != "cosine") throw ConfigError("schedule must be cosine");
  if (!(grad_clip > 0)) throw ConfigError("grad_clip must be positive");
  if (!(margin > 0)) throw ConfigError("margin must be positive");
  if (!(lambda_margin >= 0 && lambda_agree >= 0)) throw ConfigError("loss weights must be non-negative");
  if (!(nll_beta >= 0.0 && nll_beta <= 1.0)) throw ConfigError("nll_beta must be in [0, 1]");
  if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0)) throw ConfigError("labeled_fraction must be in [0, 1]");
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("max_epochs", std::to_string(max_epochs));
  kv.set("patience", std::to_string(patience));
  kv.set("lr_backbone", format_double(lr_backbone));
  kv.set("lr_heads", format_double(lr_heads));
  kv.set("lr_classifier", format_double(lr_classifier));
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("warmup_fraction", format_double(warmup_fraction));
  kv.set("schedule", schedule);
  kv.set("seed", std::to_string(seed));
  kv.set("grad_clip", format_double(grad_clip));
  kv.set("threads", std::to_string(threads));
  kv.set("margin", format_double(margin));
  kv.set("lambda_margin", format_double(lambda_margin));
  kv.set("lambda_agree", format_double(lambda_agree));
  kv.set("nll_beta", format_double(nll_beta));
  kv.set("labeled_fraction", format_double(labeled_fraction));
  kv.set("optimizer", "adamw beta1=0.9 beta2=0.999 eps=1e-08");
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv, const TrainConfig& defaults) {
  TrainConfig c = defaults;
  auto size = [&kv](const char* key, std::size_t fallback) {
    const long long v = kv.get_int_or(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.batch_size = size("batch_size", c.batch_size);
  c.max_epochs = size("max_epochs", c.max_epochs);
  c.patience = size("patience", c.patience);
  c.lr_backbone = kv.get_double_or("lr_backbone", c.lr_backbone);
  c.lr_heads = kv.get_double_or("lr_heads", c.lr_heads);
  c.lr_classifier = kv.get_double_or("lr_classifier", c.lr_classifier);
  c.weight_decay = kv.get_double_or("weight_decay", c.weight_decay);
  c.warmup_fraction = kv.get_double_or("warmup_fraction", c.warmup_fraction);
  c.schedule = kv.get_or("schedule", c.schedule);
  c.seed = static_cast<std::uint64_t>(kv.get_int_or("seed", static_cast<long long>(c.seed)));
  c.grad_clip = kv.get_double_or("grad_clip", c.grad_clip);
  c.threads = size("threads", c.threads);
  c.margin = kv.get_double_or("margin", c.margin);
  c.lambda_margin = kv.get_double_or("lambda_margin", c.lambda_margin);
  c.lambda_agree = kv.get_double_or("lambda_agree", c.lambda_agree);
  c.nll_beta = kv.get_double_or("nll_beta", c.nll_beta);
  c.labeled_fraction = kv.get_double_or("labeled_fraction", c.labeled_fraction);
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, TrainConfig{}); }

RunConfig::RunConfig() {
  classifier.batch_size = 32;
  fusion.input_width = tower.d_model;
}

namespace {

constexpr const char* kDeskPreset = R"(
[tower]
d_model=32
n_heads=4
ffn_mult=2
conv_kernel=7
vocab_buckets=512
[fusion]
ffn_mult=2
[train_a]
max_epochs=10
patience=3
lr_backbone=3e-3
lr_heads=3e-3
nll_beta=0.5
[train_cls]
max_epochs=20
patience=4
lr_classifier=2e-3
[train_fusion]
max_epochs=15
patience=4
lr_backbone=2e-3
lr_heads=2e-3
)";

}  // namespace

KeyValues RunConfig::preset_key_values(const std::string& name) {
  if (name == "paper") return {};
  if (name == "desk") return parse_key_values(kDeskPreset);
  throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
}

RunConfig RunConfig::desk() {
  KeyValues kv;
  kv.set("preset", "desk");
  return from_key_values(kv);
}

void RunConfig::validate() const {
  tower.validate();
  fusion.validate();
  phase_a.validate();
  classifier.validate();
  fusion_train.validate();
  if (fusion.input_width != tower.d_model) throw ConfigError("fusion.input_width must equal tower.d_model");
  if (tower.acoustic_width > 0 && precomputed_dir.empty())
    throw ConfigError("tower.acoustic_width requires data.precomputed_dir");
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv;
  auto add = [&kv](const std::string& prefix, const KeyValues& part) {
    for (const auto& [k, v] : part.entries()) kv.set(prefix + "." + k, v);
  };
  add("tower", tower.to_key_values());
  KeyValues p;
  p.set("frame_ms", format_double(prosody.frame_ms));
  p.set("hop_ms", format_double(prosody.hop_ms));
  p.set("f_min_hz", format_double(prosody.f_min_hz));
  p.set("f_max_hz", format_double(prosody.f_max_hz));
  p.set("voicing_threshold", format_double(prosody.voicing_threshold));
  add("prosody", p);
  add("fusion", fusion.to_key_values());
  add("train_a", phase_a.to_key_values());
  add("train_cls", classifier.to_key_values());
  add("train_fusion", fusion_train.to_key_values());
  if (!precomputed_dir.empty()) kv.set("data.precomputed_dir", precomputed_dir);
  return kv;
}

RunConfig RunConfig::from_key_values(const KeyValues& given) {
  KeyValues kv = preset_key_values(given.get_or("preset", "paper"));
  kv.merge(given);
  RunConfig c;
  c.tower = towers::TowerConfig::from_key_values(kv.section("tower"));
  const KeyValues p = kv.section("prosody");
  c.prosody.frame_ms = p.get_double_or("frame_ms", c.prosody.frame_ms);
  c.prosody.hop_ms = p.get_double_or("hop_ms", c.prosody.hop_ms);
  c.prosody.f_min_hz = p.get_double_or("f_min_hz", c.prosody.f_min_hz);
  c.prosody.f_max_hz = p.get_double_or("f_max_hz", c.prosody.f_max_hz);
  c.prosody.voicing_threshold = p.get_double_or("voicing_threshold", c.prosody.voicing_threshold);
  KeyValues f = kv.section("fusion");
  if (!f.has("input_width")) f.set("input_width", std::to_string(c.tower.d_model));
  if (!f.has("proj_width")) f.set("proj_width", std::to_string(c.tower.d_model));
  if (!f.has("n_heads")) f.set("n_heads", std::to_string(c.tower.n_heads));
  c.fusion = fusion::FusionConfig::from_key_values(f);
  const KeyValues shared = kv.section("train");
  const TrainConfig base_a = TrainConfig::from_key_values(shared, TrainConfig{});
  TrainConfig cls_defaults;
  cls_defaults.batch_size = 32;
  const TrainConfig base_cls = TrainConfig::from_key_values(shared, cls_defaults);
  c.phase_a = TrainConfig::from_key_values(kv.section("train_a"), base_a);
  c.classifier = TrainConfig::from_key_values(kv.section("train_cls"), base_cls);
  c.fusion_train = TrainConfig::from_key_values(kv.section("train_fusion"), base_a);
  c.precomputed_dir = kv.get_or("data.precomputed_dir", "");
  c.validate();
  return c;
}

// ------------------------------------------------------------------ data

Dataset load_dataset(const std::vector<manifest::Record>& records, const RunConfig& cfg,
                     const lexicon::VadLexicon& lex, std::size_t threads) {
  Dataset data(records.size());
  parallel_chunks(records.size(), resolve_threads(threads), [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& r = records[i];
      try {
        const Waveform w = read_wav(r.wav);
        Example& ex = data[i];
        ex.id = r.id;
        if (cfg.tower.acoustic_width > 0) {
          const auto dir = (std::filesystem::path(cfg.precomputed_dir) / r.split).string();
          ex.speech = towers::prepare_speech_precomputed(
              features::load_precomputed_features(dir, r.id, cfg.tower.acoustic_width), w, cfg.tower, cfg.prosody);
        } else {
          ex.speech = towers::prepare_speech(w, cfg.tower, cfg.prosody);
        }
        ex.text = towers::prepare_text(r.tokens, lex, cfg.tower);
        ex.vad = r.vad;
        ex.y = r.y;
      } catch (const std::exception& err) {
        throw std::runtime_error("record " + r.id + ": " + err.what());
      }
    }
  });
  return data;
}

// --------------------------------------------------------------- run log

std::string RunLog::to_jsonl() const {
  std::ostringstream os;
  json header{{"type", "header"}, {"phase", phase}};
  for (const auto& [k, v] : config.entries()) header["config"][k] = v;
  json groups = json::array();
  for (const auto& [name, group] : param_groups) groups.push_back({name, group});
  header["param_groups"] = groups;
  os << header.dump() << '\n';
  for (const auto& e : epochs) {
    json j{{"type", "epoch"}, {"epoch", e.epoch}, {"train", e.train}, {"val_metric", e.val_metric},
           {"val", e.val}, {"lr", e.lr}};
    os << j.dump() << '\n';
  }
  json s{{"type", "summary"}, {"best_epoch", best_epoch}, {"best_metric", best_metric},
         {"stopped_early", stopped_early}, {"values", summary}};
  os << s.dump() << '\n';
  return os.str();
}

RunLog RunLog::from_jsonl(const std::string& text) {
  RunLog log;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    const std::string type = j.value("type", "");
    if (type == "header") {
      log.phase = j.value("phase", "");
      if (j.contains("config"))
        for (const auto& [k, v] : j["config"].items()) log.config.set(k, v.get<std::string>());
      if (j.contains("param_groups"))
        for (const auto& g : j["param_groups"]) log.param_groups.emplace_back(g[0], g[1]);
    } else if (type == "epoch") {
      EpochRecord e;
      e.epoch = j["epoch"];
      e.train = j["train"].get<std::map<std::string, double>>();
      e.val_metric = j["val_metric"];
      e.val = j["val"].get<std::map<std::string, double>>();
      e.lr = j["lr"];
      log.epochs.push_back(std::move(e));
    } else if (type == "summary") {
      log.best_epoch = j["best_epoch"];
      log.best_metric = j["best_metric"];
      log.stopped_early = j["stopped_early"];
      log.summary = j["values"].get<std::map<std::string, double>>();
    }
  }
  return log;
}

void RunLog::write(const std::string& path) const { write_text_file(path, to_jsonl()); }

// --------------------------------------------------------------- Phase A

std::array<double, 3> ccc_against(const std::vector<GaussianVad>& preds, const Dataset& data) {
  std::array<std::vector<double>, 3> p, y;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].vad) continue;
    for (std::size_t k = 0; k < 3; ++k) {
      p[k].push_back(preds[i].mu[k]);
      y[k].push_back((*data[i].vad)[k]);
    }
  }
  std::array<double, 3> out{};
  for (std::size_t k = 0; k < 3; ++k) out[k] = metrics::ccc(p[k], y[k]);
  return out;
}

std::vector<GaussianVad> predict_speech(const towers::SpeechTower& tower, const Dataset& data, std::size_t threads) {
  return predict_tower(tower, data, threads, &Example::speech);
}

std::vector<GaussianVad> predict_text(const towers::TextTower& tower, const Dataset& data, std::size_t threads) {
  return predict_tower(tower, data, threads, &Example::text);
}

namespace {

template <class Tower, class Input>
PhaseAResult train_tower(const std::string& phase, Tower& tower, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg, Input Example::*member,
                         std::vector<GaussianVad> (*predict)(const Tower&, const Dataset&, std::size_t)) {
  require_labels(train, phase);
  require_labels(val, phase);
  if (val.size() < 2) throw std::runtime_error(phase + ": validation split needs at least two records");
  SampleLoss loss = [&](Graph& g, std::size_t i, std::map<std::string, double>&) {
    const auto out = tower.forward(g, train[i].*member);
    return losses::graph::weighted_gaussian_nll(out.prediction.mu, out.prediction.log_var, *train[i].vad, cfg.nll_beta);
  };
  Validator validate = [&]() {
    const auto preds = predict(tower, val, cfg.threads);
    const auto c = ccc_against(preds, val);
    auto extra = ccc_extras(c);
    double nll = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) nll += losses::gaussian_nll(preds[i], *val[i].vad);
    extra["nll"] = nll / static_cast<double>(val.size());
    return std::make_pair(metrics::mean_ccc(c), extra);
  };
  PhaseAResult r;
  r.log = fit(phase, tower.parameters(), cfg, cfg.lr_backbone, cfg.lr_heads, train.size(), loss, validate);
  round_to_checkpoint_precision(tower.parameters());
  r.val_ccc = ccc_against(predict(tower, val, cfg.threads), val);
  r.val_ccc_avg = metrics::mean_ccc(r.val_ccc);
  r.log.summary["val_ccc_avg"] = r.val_ccc_avg;
  for (std::size_t k = 0; k < 3; ++k) r.log.summary[std::string("val_ccc.") + kVadNames[k]] = r.val_ccc[k];
  for (const KeyValues part = tower.config().to_key_values(); const auto& [k, v] : part.entries()) r.log.config.set("tower." + k, v);
  return r;
}

}  // namespace

PhaseAResult train_speech_tower(towers::SpeechTower& tower, const Dataset& train, const Dataset& val,
                                const TrainConfig& cfg) {
  return train_tower<towers::SpeechTower>("speech", tower, train, val, cfg, &Example::speech, &predict_speech);
}

PhaseAResult train_text_tower(towers::TextTower& tower, const Dataset& train, const Dataset& val,
                              const TrainConfig& cfg) {
  return train_tower<towers::TextTower>("text", tower, train, val, cfg, &Example::text, &predict_text);
}

// --------------------------------------------------------------- Phase B

std::vector<FrozenPair> freeze_outputs(const towers::SpeechTower& speech, const towers::TextTower& text,
                                       const Dataset& data, std::size_t threads) {
  std::vector<FrozenPair> out(data.size());
  parallel_chunks(data.size(), resolve_threads(threads), [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      Graph g;
      const auto s = speech.forward(g, data[i].speech);
      const auto t = text.forward(g, data[i].text);
      FrozenPair& f = out[i];
      f.id = data[i].id;
      f.seq_s = s.sequence.value();
      f.mask_s = s.mask;
      f.pred_s = to_gaussian(s.prediction);
      f.seq_t = t.sequence.value();
      f.mask_t = t.mask;
      f.pred_t = to_gaussian(t.prediction);
      f.vad = data[i].vad;
      f.y = data[i].y;
    }
  });
  return out;
}

std::vector<double> classifier_scores(const fusion::InconsistencyClassifier& clf, const std::vector<FrozenPair>& data,
                                      std::size_t threads) {
  std::vector<double> out(data.size());
  parallel_chunks(data.size(), resolve_threads(threads), [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      Graph g;
      const auto pair = clf.project(g, g.constant(data[i].seq_s), data[i].mask_s, g.constant(data[i].seq_t),
                                    data[i].mask_t);
      out[i] = clf.classify(g, pair).scalar();
    }
  });
  return out;
}

ClassifierResult train_phase_b_classifier(fusion::InconsistencyClassifier& clf, const std::vector<FrozenPair>& train,
                                          const std::vector<FrozenPair>& val, const TrainConfig& cfg) {
  auto labels_of = [](const std::vector<FrozenPair>& d, const char* what) {
    std::vector<int> y;
    for (const auto& f : d) {
      if (!f.y) throw std::runtime_error(std::string(what) + ": record " + f.id + " has no consistency label");
      y.push_back(*f.y == 0 ? 1 : 0);  // positive = inconsistent
    }
    if (std::find(y.begin(), y.end(), 0) == y.end() || std::find(y.begin(), y.end(), 1) == y.end())
      throw std::runtime_error(std::string(what) + ": both consistent and inconsistent records are required");
    return y;
  };
  labels_of(train, "classifier training data");
  const std::vector<int> val_y = labels_of(val, "classifier validation data");

  SampleLoss loss = [&](Graph& g, std::size_t i, std::map<std::string, double>& parts) {
    const FrozenPair& f = train[i];
    const auto pair = clf.project(g, g.constant(f.seq_s), f.mask_s, g.constant(f.seq_t), f.mask_t);
    Var p = clf.classify(g, pair);
    losses::LossValue lv;
    Var l = losses::graph::classifier_loss(p, *f.y, pair.pooled_s, pair.pooled_t, cfg.margin, cfg.lambda_margin, &lv);
    for (const auto& [k, v] : lv.components) parts[k] = v;
    return l;
  };
  Validator validate = [&]() {
    const auto scores = classifier_scores(clf, val, cfg.threads);
    const auto yr = metrics::youden(scores, val_y);
    const auto b = metrics::binary_metrics(scores, val_y, yr.tau);
    std::map<std::string, double> extra{{"tau", yr.tau}, {"youden_j", yr.j}, {"accuracy", b.accuracy},
                                        {"precision", b.precision}, {"recall", b.recall}};
    return std::make_pair(b.f1, extra);
  };
  ClassifierResult r;
  r.log = fit("classifier", clf.parameters(), cfg, cfg.lr_classifier, cfg.lr_classifier, train.size(), loss, validate);
  round_to_checkpoint_precision(clf.parameters());
  const auto scores = classifier_scores(clf, val, cfg.threads);
  r.tau_star = metrics::youden_threshold(scores, val_y);
  r.val_f1 = metrics::binary_metrics(scores, val_y, r.tau_star).f1;
  r.log.summary["tau_star"] = r.tau_star;
  r.log.summary["val_f1"] = r.val_f1;
  for (const KeyValues part = clf.config().to_key_values(); const auto& [k, v] : part.entries()) r.log.config.set("fusion." + k, v);
  return r;
}

std::vector<FusedPrediction> fusion_predictions(const fusion::FusionTower& tower, const std::vector<FrozenPair>& data,
                                                std::size_t threads) {
  std::vector<FusedPrediction> out(data.size());
  parallel_chunks(data.size(), resolve_threads(threads), [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      Graph g;
      const auto f = tower.forward(g, g.constant(data[i].seq_s), data[i].mask_s, g.constant(data[i].seq_t),
                                   data[i].mask_t);
      out[i] = {to_gaussian(f.prediction), f.gates.gate_s.scalar(), f.gates.gate_t.scalar()};
    }
  });
  return out;
}

FusionResult train_phase_b_fusion(fusion::FusionTower& tower, const std::vector<FrozenPair>& train,
                                  const std::vector<FrozenPair>& val, const TrainConfig& cfg) {
  for (const auto* d : {&train, &val})
    for (const auto& f : *d)
      if (f.y && *f.y == 0)
        throw std::runtime_error("fusion training accepts only consistent pairs; record " + f.id + " has y=0");

  // Deterministic labeled subset.
  std::vector<std::size_t> labeled_idx;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].vad) labeled_idx.push_back(i);
  shuffle(labeled_idx, derive(cfg.seed, 0x1ABE1));
  labeled_idx.resize(static_cast<std::size_t>(
      std::llround(cfg.labeled_fraction * static_cast<double>(labeled_idx.size()))));
  std::vector<bool> keep_label(train.size(), false);
  for (std::size_t i : labeled_idx) keep_label[i] = true;
  if (labeled_idx.empty() && cfg.lambda_agree == 0.0)
    throw std::runtime_error("fusion training has no labeled records and lambda_agree = 0");
  std::size_t val_labeled = 0;
  for (const auto& f : val) val_labeled += f.vad ? 1 : 0;
  if (val_labeled < 2) throw std::runtime_error("fusion validation needs at least two labeled records");

  std::vector<GaussianVad> targets(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) targets[i] = losses::agreement_target(train[i].pred_s, train[i].pred_t);

  SampleLoss loss = [&](Graph& g, std::size_t i, std::map<std::string, double>& parts) {
    const FrozenPair& f = train[i];
    const auto out = tower.forward(g, g.constant(f.seq_s), f.mask_s, g.constant(f.seq_t), f.mask_t);
    losses::LossValue lv;
    const std::optional<VadVector> labels = keep_label[i] ? f.vad : std::nullopt;
    Var l = losses::graph::fusion_loss(out.prediction, labels, targets[i], cfg.lambda_agree, &lv);
    for (const auto& [k, v] : lv.components) parts[k] = v;
    return l;
  };
  // Labels for validation CCC.
  auto fused_ccc = [&](std::map<std::string, double>* extra) {
    const auto preds = fusion_predictions(tower, val, cfg.threads);
    std::array<std::vector<double>, 3> p, y;
    double gate_mean = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      gate_mean += preds[i].gate_s;
      if (!val[i].vad) continue;
      for (std::size_t k = 0; k < 3; ++k) {
        p[k].push_back(preds[i].fused.mu[k]);
        y[k].push_back((*val[i].vad)[k]);
      }
    }
    std::array<double, 3> c{};
    for (std::size_t k = 0; k < 3; ++k) c[k] = metrics::ccc(p[k], y[k]);
    if (extra) {
      *extra = ccc_extras(c);
      (*extra)["gate_s.mean"] = gate_mean / static_cast<double>(val.size());
    }
    return c;
  };
  Validator validate = [&]() {
    std::map<std::string, double> extra;
    const auto c = fused_ccc(&extra);
    return std::make_pair(metrics::mean_ccc(c), extra);
  };
  FusionResult r;
  r.log = fit("fusion", tower.parameters(), cfg, cfg.lr_heads, cfg.lr_heads, train.size(), loss, validate);
  round_to_checkpoint_precision(tower.parameters());
  r.val_ccc = fused_ccc(nullptr);
  r.val_ccc_avg = metrics::mean_ccc(r.val_ccc);
  r.log.summary["val_ccc_avg"] = r.val_ccc_avg;
  r.log.summary["labeled_records"] = static_cast<double>(labeled_idx.size());
  for (const KeyValues part = tower.config().to_key_values(); const auto& [k, v] : part.entries()) r.log.config.set("fusion." + k, v);
  return r;
}

// ----------------------------------------------------------- checkpoints

void round_to_checkpoint_precision(const ag::ParamList& params) {
  for (auto* p : params)
    for (double& v : p->value.flat()) v = static_cast<double>(static_cast<float>(v));
}

namespace {

KeyValues with_kind(KeyValues kv, const std::string& kind) {
  kv.set("kind", kind);
  return kv;
}

checkpoint::Checkpoint read_kind(const std::string& path, const std::string& kind) {
  auto ck = checkpoint::read(path);
  const std::string found = ck.config.get_or("kind", "");
  if (found != kind) throw checkpoint::CheckpointError(path + ": expected a " + kind + " checkpoint, found '" + found + "'");
  return ck;
}

}  // namespace

void save_speech_tower(const std::string& path, towers::SpeechTower& tower) {
  checkpoint::save(path, with_kind(tower.config().to_key_values(), "speech_tower"), tower.parameters());
}

void save_text_tower(const std::string& path, towers::TextTower& tower) {
  checkpoint::save(path, with_kind(tower.config().to_key_values(), "text_tower"), tower.parameters());
}

void save_classifier(const std::string& path, fusion::InconsistencyClassifier& clf, double tau_star) {
  KeyValues kv = with_kind(clf.config().to_key_values(), "classifier");
  kv.set("tau_star", format_double(tau_star));
  checkpoint::save(path, kv, clf.parameters());
}

void save_fusion(const std::string& path, fusion::FusionTower& tower) {
  checkpoint::save(path, with_kind(tower.config().to_key_values(), "fusion"), tower.parameters());
}

std::unique_ptr<towers::SpeechTower> load_speech_tower(const std::string& path) {
  const auto ck = read_kind(path, "speech_tower");
  auto tower = std::make_unique<towers::SpeechTower>(towers::TowerConfig::from_key_values(ck.config), 0);
  checkpoint::load_parameters(ck, tower->parameters());
  return tower;
}

std::unique_ptr<towers::TextTower> load_text_tower(const std::string& path) {
  const auto ck = read_kind(path, "text_tower");
  auto tower = std::make_unique<towers::TextTower>(towers::TowerConfig::from_key_values(ck.config), 0);
  checkpoint::load_parameters(ck, tower->parameters());
  return tower;
}

std::unique_ptr<fusion::InconsistencyClassifier> load_classifier(const std::string& path, double* tau_star) {
  const auto ck = read_kind(path, "classifier");
  auto clf = std::make_unique<fusion::InconsistencyClassifier>(fusion::FusionConfig::from_key_values(ck.config), 0);
  checkpoint::load_parameters(ck, clf->parameters());
  if (tau_star) *tau_star = ck.config.get_double_or("tau_star", 0.5);
  return clf;
}

std::unique_ptr<fusion::FusionTower> load_fusion(const std::string& path) {
  const auto ck = read_kind(path, "fusion");
  auto tower = std::make_unique<fusion::FusionTower>(fusion::FusionConfig::from_key_values(ck.config), 0);
  checkpoint::load_parameters(ck, tower->parameters());
  return tower;
}

std::uint64_t tower_checksum(towers::SpeechTower& speech, towers::TextTower& text) {
  ParamList all = speech.parameters();
  const ParamList t = text.parameters();
  all.insert(all.end(), t.begin(), t.end());
  return checkpoint::checksum(all);
}

ModelSet load_models(const std::string& dir) {
  namespace fs = std::filesystem;
  ModelSet m;
  m.speech = load_speech_tower((fs::path(dir) / "speech.ckpt").string());
  m.text = load_text_tower((fs::path(dir) / "text.ckpt").string());
  m.classifier = load_classifier((fs::path(dir) / "classifier.ckpt").string(), &m.tau);
  m.fusion = load_fusion((fs::path(dir) / "fusion.ckpt").string());
  const std::size_t width = m.speech->config().d_model;
  if (m.text->config().d_model != width || m.classifier->config().input_width != width ||
      m.fusion->config().input_width != width)
    throw checkpoint::CheckpointError("checkpoint widths in " + dir + " are inconsistent");
  return m;
}

// ------------------------------------------------------------- inference

VadVector to_native(const VadVector& aligned, const Alignment& alignment) {
  VadVector out;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& tgt = alignment.target[k];
    const double v = std::clamp(aligned[k], tgt.lo, tgt.hi);
    out[k] = align::invert_label(v, alignment.source[k], tgt);
  }
  return out;
}

Prediction predict(const ModelSet& models, const Example& example, const Alignment* alignment) {
  if (!models.speech || !models.text || !models.classifier || !models.fusion)
    throw std::runtime_error("predict requires all four models");
  Graph g;
  const auto s = models.speech->forward(g, example.speech);
  const auto t = models.text->forward(g, example.text);
  Prediction p;
  p.id = example.id;
  p.tau = models.tau;
  p.speech = to_gaussian(s.prediction);
  p.text = to_gaussian(t.prediction);
  Var seq_s = g.constant(s.sequence.value());
  Var seq_t = g.constant(t.sequence.value());
  const auto pair = models.classifier->project(g, seq_s, s.mask, seq_t, t.mask);
  p.p_inc = models.classifier->classify(g, pair).scalar();
  p.decision = fusion::decide(p.p_inc, p.tau);
  if (p.decision == fusion::Decision::consistent) {
    const auto f = models.fusion->forward(g, seq_s, s.mask, seq_t, t.mask);
    p.fused = FusedPrediction{to_gaussian(f.prediction), f.gates.gate_s.scalar(), f.gates.gate_t.scalar()};
  }
  if (alignment) {
    p.speech_native = to_native(p.speech.mu, *alignment);
    p.text_native = to_native(p.text.mu, *alignment);
    if (p.fused) p.fused_native = to_native(p.fused->fused.mu, *alignment);
  }
  return p;
}

std::string Prediction::to_json() const {
  json j{{"id", id}, {"p_inc", p_inc}, {"tau", tau}, {"decision", fusion::decision_name(decision)},
         {"speech", gaussian_json(speech)}, {"text", gaussian_json(text)}};
  if (fused) {
    j["fused"] = gaussian_json(fused->fused);
    j["fused"]["gates"] = {fused->gate_s, fused->gate_t};
  }
  if (speech_native) j["native"]["speech"] = vad_json(*speech_native);
  if (text_native) j["native"]["text"] = vad_json(*text_native);
  if (fused_native) j["native"]["fused"] = vad_json(*fused_native);
  return j.dump();
}

Evaluation evaluate(const ModelSet& models, const Dataset& data, std::size_t threads) {
  if (data.empty()) throw std::runtime_error("evaluate: empty manifest");
  const auto frozen = freeze_outputs(*models.speech, *models.text, data, threads);
  const auto scores = classifier_scores(*models.classifier, frozen, threads);
  const auto fused = fusion_predictions(*models.fusion, frozen, threads);

  Evaluation ev;
  auto regression = [&](metrics::EvalReport& rep, auto pick, bool consistent_only) {
    std::array<std::vector<double>, 3> p, y;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data[i].vad) continue;
      if (consistent_only && data[i].y && *data[i].y == 0) continue;
      const GaussianVad g = pick(i);
      for (std::size_t k = 0; k < 3; ++k) {
        p[k].push_back(g.mu[k]);
        y[k].push_back((*data[i].vad)[k]);
      }
    }
    rep.n_records = p[0].size();
    if (p[0].size() < 2) return;
    std::array<double, 3> c{};
    for (std::size_t k = 0; k < 3; ++k) c[k] = metrics::ccc(p[k], y[k]);
    rep.ccc = c;
    rep.ccc_avg = metrics::mean_ccc(c);
  };
  regression(ev.speech, [&](std::size_t i) { return frozen[i].pred_s; }, false);
  regression(ev.text, [&](std::size_t i) { return frozen[i].pred_t; }, false);
  regression(ev.fused, [&](std::size_t i) { return fused[i].fused; }, true);

  std::vector<double> labeled_scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].y) {
      labeled_scores.push_back(scores[i]);
      labels.push_back(*data[i].y == 0 ? 1 : 0);  // positive = inconsistent
    }
  ev.classifier.n_records = labels.size();
  if (!labels.empty()) {
    ev.classifier.binary = metrics::binary_metrics(labeled_scores, labels, models.tau);
    ev.classifier.tau_star = models.tau;
  }

  for (std::size_t i = 0; i < data.size(); ++i) {
    Prediction p;
    p.id = data[i].id;
    p.p_inc = scores[i];
    p.tau = models.tau;
    p.decision = fusion::decide(p.p_inc, p.tau);
    p.speech = frozen[i].pred_s;
    p.text = frozen[i].pred_t;
    if (p.decision == fusion::Decision::consistent) p.fused = fused[i];
    ev.predictions.push_back(std::move(p));
  }
  ev.all_fused = fused;
  return ev;
}

std::string format_evaluation(const Evaluation& ev) {
  KeyValues kv;
  auto add = [&kv](const std::string& prefix, const metrics::EvalReport& rep) {
    for (const KeyValues part = rep.to_key_values(); const auto& [k, v] : part.entries()) kv.set(prefix + "." + k, v);
  };
  add("speech", ev.speech);
  add("text", ev.text);
  add("fused", ev.fused);
  add("classifier", ev.classifier);
  return format_key_values(kv);
}

}  // namespace inconvad::pipeline

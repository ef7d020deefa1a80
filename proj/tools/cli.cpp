#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "inconvad/checkpoint.hpp"
#include "inconvad/config.hpp"
#include "inconvad/label_alignment.hpp"
#include "inconvad/lexicon.hpp"
#include "inconvad/manifest.hpp"
#include "inconvad/pipeline.hpp"
#include "inconvad/prosody.hpp"
#include "inconvad/synthdata.hpp"
#include "inconvad/wav.hpp"
#include "report.hpp"

namespace inconvad::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kOutEnv = "INCONVAD_OUT";

struct Globals {
  std::string config;
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::string log_level = "info";
};

// ------------------------------------------------------------- paths

fs::path out_root(const Globals& g) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return "inconvad_out";
}

fs::path data_dir(const Globals& g) { return g.data.empty() ? out_root(g) / "data" : fs::path(g.data); }
fs::path models_dir(const Globals& g) { return out_root(g) / "models"; }

KeyValues config_file(const Globals& g) {
  KeyValues kv;
  if (!g.config.empty()) kv = parse_key_values(read_text_file(g.config));
  return kv;
}

// The CLI trains at desk scale unless the config names another preset.
pipeline::RunConfig run_config(const Globals& g) {
  KeyValues kv = config_file(g);
  if (!kv.has("preset")) kv.set("preset", "desk");
  pipeline::RunConfig rc = pipeline::RunConfig::from_key_values(kv);
  for (pipeline::TrainConfig* t : {&rc.phase_a, &rc.classifier, &rc.fusion_train}) {
    if (g.seed) t->seed = *g.seed;
    t->threads = g.threads;
  }
  rc.validate();
  return rc;
}

std::uint64_t init_seed(const pipeline::TrainConfig& t, std::uint64_t tag) { return t.seed * 1000003ULL + tag; }

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw std::runtime_error(what + " not found: " + p.string());
}

pipeline::Dataset load_split(const fs::path& manifest_path, const pipeline::RunConfig& rc,
                             const lexicon::VadLexicon& lex) {
  require_file(manifest_path, "manifest");
  auto data = pipeline::load_dataset(manifest::read(manifest_path.string()), rc, lex, rc.phase_a.threads);
  spdlog::info("loaded {} records from {}", data.size(), manifest_path.string());
  return data;
}

lexicon::VadLexicon load_lexicon_at(const fs::path& p) {
  require_file(p, "lexicon");
  return lexicon::load_lexicon(p.string());
}

void echo_config(const fs::path& dir, const pipeline::RunConfig& rc) {
  fs::create_directories(dir);
  write_text_file((dir / "run_config.txt").string(), format_key_values(rc.to_key_values()));
}

void print_summary(const std::string& phase, const pipeline::RunLog& log) {
  std::cout << phase << ".best_epoch=" << log.best_epoch << '\n';
  std::cout << phase << ".stopped_early=" << (log.stopped_early ? "true" : "false") << '\n';
  for (const auto& [k, v] : log.summary) std::cout << phase << '.' << k << '=' << format_double(v) << '\n';
}

// Tower config and widths come from the stored checkpoints so data
// preparation always matches the trained models.
pipeline::RunConfig config_for_models(const Globals& g, const towers::TowerConfig& tower) {
  pipeline::RunConfig rc = run_config(g);
  rc.tower = tower;
  rc.fusion.input_width = tower.d_model;
  return rc;
}

// ---------------------------------------------------------- gen-data

struct GenOptions {
  std::optional<std::size_t> n;
  std::optional<double> snr;
  std::optional<double> inconsistent_fraction;
};

int cmd_gen_data(const Globals& g, const GenOptions& o) {
  synth::SynthConfig sc = synth::SynthConfig::from_key_values(config_file(g).section("synth"));
  if (o.n) sc.n_utterances = *o.n;
  if (o.snr) sc.snr_db = *o.snr;
  if (o.inconsistent_fraction) sc.inconsistent_fraction = *o.inconsistent_fraction;
  if (g.seed) sc.seed = *g.seed;
  sc.validate();
  const fs::path dir = data_dir(g);
  const auto corpus = synth::generate_corpus(sc, dir.string());
  std::cout << "data_dir=" << dir.string() << '\n'
            << "train=" << corpus.train.size() << '\n'
            << "val=" << corpus.val.size() << '\n'
            << "test=" << corpus.test.size() << '\n'
            << format_key_values(sc.to_key_values());
  return kExitOk;
}

// ------------------------------------------------------ align-labels

struct LabelTable {
  char delim = '\t';
  std::vector<std::string> header;
  std::vector<std::string> ids;
  std::vector<VadVector> values;
};

LabelTable read_labels(const std::string& path) {
  std::istringstream is(read_text_file(path));
  LabelTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (t.header.empty()) {
      t.delim = line.find('\t') != std::string::npos ? '\t' : ',';
      t.header = split(line, t.delim);
      if (t.header.size() != 4) throw std::runtime_error(path + ": expected header id, V, A, D");
      continue;
    }
    const auto cols = split(line, t.delim);
    if (cols.size() != 4) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 4 columns");
    VadVector v;
    for (std::size_t k = 0; k < 3; ++k) v[k] = parse_double(trim(cols[k + 1]), path + ":" + std::to_string(line_no));
    t.ids.push_back(trim(cols[0]));
    t.values.push_back(v);
  }
  if (t.ids.empty()) throw std::runtime_error(path + ": no label rows");
  return t;
}

struct AlignOptions {
  std::string labels;
  std::string source;
  std::string target;
  std::string output;
  bool fit = false;
  std::vector<double> range;
};

int cmd_align_labels(const Globals& g, const AlignOptions& o) {
  const LabelTable t = read_labels(o.labels);
  if (o.fit) {
    align::VadBetaParams params;
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> col;
      for (const auto& v : t.values) col.push_back(v[k]);
      double lo = *std::min_element(col.begin(), col.end());
      double hi = *std::max_element(col.begin(), col.end());
      if (!o.range.empty()) {
        lo = o.range[0];
        hi = o.range[1];
      }
      params[k] = align::fit_beta(col, lo, hi);
    }
    const fs::path out = o.output.empty() ? out_root(g) / "align_params.txt" : fs::path(o.output);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    align::write_params(out.string(), params);
    std::cout << align::format_params(params);
    return kExitOk;
  }
  if (o.source.empty() || o.target.empty()) throw CLI::ValidationError("align-labels needs --source and --target");
  const auto src = align::read_params(o.source);
  const auto tgt = align::read_params(o.target);
  std::ostringstream os;
  os << t.header[0] << t.delim << t.header[1] << t.delim << t.header[2] << t.delim << t.header[3] << '\n';
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    os << t.ids[i];
    for (std::size_t k = 0; k < 3; ++k) os << t.delim << format_double(align::align_label(t.values[i][k], src[k], tgt[k]));
    os << '\n';
  }
  const fs::path out = o.output.empty() ? out_root(g) / "aligned_labels.tsv" : fs::path(o.output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text_file(out.string(), os.str());
  std::cout << "aligned=" << t.ids.size() << "\noutput=" << out.string() << '\n';
  return kExitOk;
}

// --------------------------------------------------- extract-prosody

int cmd_extract_prosody(const Globals& g, const std::string& wav_path, const std::string& output) {
  const pipeline::RunConfig rc = run_config(g);
  const Waveform w = read_wav(wav_path);
  const auto& p = rc.prosody;
  const auto pitch = prosody::extract_pitch(w, p.frame_ms, p.hop_ms, p.f_min_hz, p.f_max_hz, p.voicing_threshold);
  const auto energy = prosody::extract_energy(w, p.frame_ms, p.hop_ms);
  const auto norm = prosody::extract_prosody(w, p);
  std::ostringstream os;
  os << "frame\ttime_s\tpitch_hz\tlog_energy\tpitch_z\tlog_energy_z\n";
  for (std::size_t t = 0; t < pitch.size(); ++t)
    os << t << '\t' << format_double(static_cast<double>(t) * p.hop_ms / 1000.0) << '\t' << format_double(pitch[t])
       << '\t' << format_double(energy[t]) << '\t' << format_double(norm.pitch[t]) << '\t'
       << format_double(norm.log_energy[t]) << '\n';
  if (output.empty() || output == "-") {
    std::cout << os.str();
  } else {
    if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path());
    write_text_file(output, os.str());
    std::cout << "frames=" << pitch.size() << "\noutput=" << output << '\n';
  }
  return kExitOk;
}

// ----------------------------------------------------------- training

struct TrainOptions {
  std::string modality = "both";
  std::string train_manifest;
  std::string val_manifest;
};

fs::path manifest_or(const Globals& g, const std::string& given, const std::string& fallback) {
  return given.empty() ? data_dir(g) / fallback : fs::path(given);
}

int cmd_train_a(const Globals& g, const TrainOptions& o) {
  const pipeline::RunConfig rc = run_config(g);
  const auto lex = load_lexicon_at(data_dir(g) / "lexicon.tsv");
  const auto train = load_split(manifest_or(g, o.train_manifest, "train.tsv"), rc, lex);
  const auto val = load_split(manifest_or(g, o.val_manifest, "val.tsv"), rc, lex);
  const fs::path dir = models_dir(g);
  echo_config(dir, rc);
  if (o.modality == "speech" || o.modality == "both") {
    towers::SpeechTower tower(rc.tower, init_seed(rc.phase_a, 1));
    const auto r = pipeline::train_speech_tower(tower, train, val, rc.phase_a);
    pipeline::save_speech_tower((dir / "speech.ckpt").string(), tower);
    r.log.write((dir / "runlog_speech.jsonl").string());
    print_summary("speech", r.log);
  }
  if (o.modality == "text" || o.modality == "both") {
    towers::TextTower tower(rc.tower, init_seed(rc.phase_a, 2));
    const auto r = pipeline::train_text_tower(tower, train, val, rc.phase_a);
    pipeline::save_text_tower((dir / "text.ckpt").string(), tower);
    r.log.write((dir / "runlog_text.jsonl").string());
    print_summary("text", r.log);
  }
  return kExitOk;
}

struct Towers {
  std::unique_ptr<towers::SpeechTower> speech;
  std::unique_ptr<towers::TextTower> text;
};

Towers load_towers(const fs::path& dir) {
  require_file(dir / "speech.ckpt", "speech checkpoint");
  require_file(dir / "text.ckpt", "text checkpoint");
  Towers t{pipeline::load_speech_tower((dir / "speech.ckpt").string()),
           pipeline::load_text_tower((dir / "text.ckpt").string())};
  if (t.speech->config().d_model != t.text->config().d_model)
    throw checkpoint::CheckpointError("speech and text checkpoints have different widths");
  return t;
}

int cmd_train_b_cls(const Globals& g, const TrainOptions& o) {
  const fs::path dir = models_dir(g);
  Towers t = load_towers(dir);
  const pipeline::RunConfig rc = config_for_models(g, t.speech->config());
  const auto lex = load_lexicon_at(data_dir(g) / "lexicon.tsv");
  const auto train = load_split(manifest_or(g, o.train_manifest, "pairs_train.tsv"), rc, lex);
  const auto val = load_split(manifest_or(g, o.val_manifest, "pairs_val.tsv"), rc, lex);
  const auto before = pipeline::tower_checksum(*t.speech, *t.text);
  const auto ftrain = pipeline::freeze_outputs(*t.speech, *t.text, train, rc.classifier.threads);
  const auto fval = pipeline::freeze_outputs(*t.speech, *t.text, val, rc.classifier.threads);
  fusion::InconsistencyClassifier clf(rc.fusion, init_seed(rc.classifier, 3));
  const auto r = pipeline::train_phase_b_classifier(clf, ftrain, fval, rc.classifier);
  if (pipeline::tower_checksum(*t.speech, *t.text) != before)
    throw std::logic_error("tower parameters changed during classifier training");
  pipeline::save_classifier((dir / "classifier.ckpt").string(), clf, r.tau_star);
  r.log.write((dir / "runlog_classifier.jsonl").string());
  print_summary("classifier", r.log);
  return kExitOk;
}

int cmd_train_b_fusion(const Globals& g, const TrainOptions& o) {
  const fs::path dir = models_dir(g);
  Towers t = load_towers(dir);
  const pipeline::RunConfig rc = config_for_models(g, t.speech->config());
  const auto lex = load_lexicon_at(data_dir(g) / "lexicon.tsv");
  const auto train = load_split(manifest_or(g, o.train_manifest, "train.tsv"), rc, lex);
  const auto val = load_split(manifest_or(g, o.val_manifest, "val.tsv"), rc, lex);
  const auto before = pipeline::tower_checksum(*t.speech, *t.text);
  const auto ftrain = pipeline::freeze_outputs(*t.speech, *t.text, train, rc.fusion_train.threads);
  const auto fval = pipeline::freeze_outputs(*t.speech, *t.text, val, rc.fusion_train.threads);
  fusion::FusionTower tower(rc.fusion, init_seed(rc.fusion_train, 4));
  const auto r = pipeline::train_phase_b_fusion(tower, ftrain, fval, rc.fusion_train);
  if (pipeline::tower_checksum(*t.speech, *t.text) != before)
    throw std::logic_error("tower parameters changed during fusion training");
  pipeline::save_fusion((dir / "fusion.ckpt").string(), tower);
  r.log.write((dir / "runlog_fusion.jsonl").string());
  print_summary("fusion", r.log);
  return kExitOk;
}

// -------------------------------------------------------- evaluation

struct EvalOptions {
  std::string split = "test";
  std::string manifest;
  bool json_lines = false;
};

std::vector<std::string> evaluation_records(const pipeline::Evaluation& ev, const pipeline::Dataset& data) {
  std::vector<std::string> lines;
  const std::pair<const char*, const metrics::EvalReport*> reports[] = {
      {"speech", &ev.speech}, {"text", &ev.text}, {"fused", &ev.fused}, {"classifier", &ev.classifier}};
  for (const auto& [name, rep] : reports) {
    json j = json::parse(rep->to_json());
    j["type"] = "report";
    j["model"] = name;
    lines.push_back(j.dump());
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = ev.predictions[i];
    json j{{"type", "record"}, {"id", p.id}, {"p_inc", p.p_inc}, {"decision", fusion::decision_name(p.decision)},
           {"gate_s", ev.all_fused[i].gate_s}, {"gate_t", ev.all_fused[i].gate_t}};
    if (data[i].y) j["y"] = *data[i].y;
    lines.push_back(j.dump());
  }
  return lines;
}

int cmd_eval(const Globals& g, const EvalOptions& o) {
  const fs::path dir = models_dir(g);
  const pipeline::ModelSet models = pipeline::load_models(dir.string());
  const pipeline::RunConfig rc = config_for_models(g, models.speech->config());
  const auto lex = load_lexicon_at(data_dir(g) / "lexicon.tsv");
  const auto data = load_split(manifest_or(g, o.manifest, "pairs_" + o.split + ".tsv"), rc, lex);
  const auto ev = pipeline::evaluate(models, data, rc.phase_a.threads);
  std::cout << pipeline::format_evaluation(ev);
  const auto lines = evaluation_records(ev, data);
  std::ostringstream os;
  for (const auto& l : lines) os << l << '\n';
  write_text_file((dir / ("eval_" + o.split + ".jsonl")).string(), os.str());
  if (o.json_lines)
    for (std::size_t i = 0; i < 4; ++i) std::cout << lines[i] << '\n';
  return kExitOk;
}

struct PredictOptions {
  std::string wav;
  std::string tokens;
  std::string id = "pair";
  std::string lexicon;
  std::string align_source;
  std::string align_target;
};

int cmd_predict(const Globals& g, const PredictOptions& o) {
  const pipeline::ModelSet models = pipeline::load_models(models_dir(g).string());
  const pipeline::RunConfig rc = config_for_models(g, models.speech->config());
  const auto lex = load_lexicon_at(o.lexicon.empty() ? data_dir(g) / "lexicon.tsv" : fs::path(o.lexicon));
  pipeline::Example ex;
  ex.id = o.id;
  ex.speech = towers::prepare_speech(read_wav(o.wav), rc.tower, rc.prosody);
  ex.text = towers::prepare_text(split_whitespace(o.tokens), lex, rc.tower);
  std::optional<pipeline::Alignment> alignment;
  if (!o.align_source.empty() || !o.align_target.empty()) {
    if (o.align_source.empty() || o.align_target.empty())
      throw CLI::ValidationError("--align-source and --align-target go together");
    alignment = pipeline::Alignment{align::read_params(o.align_source), align::read_params(o.align_target)};
  }
  std::cout << pipeline::predict(models, ex, alignment ? &*alignment : nullptr).to_json() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------ report

int cmd_report(const Globals& g, const std::string& split) {
  const fs::path dir = models_dir(g);
  const fs::path out = out_root(g) / "report";
  fs::create_directories(out);
  std::vector<std::string> written;

  std::map<std::string, pipeline::RunLog> logs;
  for (const char* phase : {"speech", "text", "classifier", "fusion"}) {
    const fs::path p = dir / (std::string("runlog_") + phase + ".jsonl");
    if (fs::exists(p)) logs[phase] = pipeline::RunLog::from_jsonl(read_text_file(p.string()));
  }
  if (!logs.empty()) {
    write_text_file((out / "training_curves.svg").string(), report::training_curves(logs));
    written.push_back("training_curves.svg");
  }

  const fs::path eval_path = dir / ("eval_" + split + ".jsonl");
  if (fs::exists(eval_path)) {
    std::vector<report::Series> bars;
    std::vector<double> scores, gates;
    std::vector<int> labels;
    std::optional<double> tau;
    std::istringstream is(read_text_file(eval_path.string()));
    std::string line;
    while (std::getline(is, line)) {
      if (trim(line).empty()) continue;
      const json j = json::parse(line);
      if (j["type"] == "report") {
        if (j.contains("ccc")) {
          report::Series s{j["model"].get<std::string>(), {}};
          for (std::size_t k = 0; k < 3; ++k) s.values[k] = j["ccc"][kVadNames[k]].get<double>();
          bars.push_back(s);
        }
        if (j.contains("tau_star")) tau = j["tau_star"].get<double>();
      } else if (j["type"] == "record") {
        if (j.contains("y")) {
          scores.push_back(j["p_inc"].get<double>());
          labels.push_back(j["y"].get<int>() == 0 ? 1 : 0);
        }
        if (j["decision"] == "consistent") gates.push_back(j["gate_s"].get<double>());
      }
    }
    if (!bars.empty()) {
      write_text_file((out / "ccc.svg").string(), report::ccc_bars(bars));
      written.push_back("ccc.svg");
    }
    const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
    if (both && tau) {
      const auto b = metrics::binary_metrics(scores, labels, *tau);
      const double fpr = b.fp + b.tn > 0 ? static_cast<double>(b.fp) / static_cast<double>(b.fp + b.tn) : 0.0;
      const double tpr = b.tp + b.fn > 0 ? static_cast<double>(b.tp) / static_cast<double>(b.tp + b.fn) : 0.0;
      write_text_file((out / "roc.svg").string(), report::roc_plot(metrics::roc_curve(scores, labels), *tau, fpr, tpr));
      written.push_back("roc.svg");
    }
    write_text_file((out / "gates.svg").string(), report::gate_histogram(gates));
    written.push_back("gates.svg");
  }
  if (written.empty())
    throw std::runtime_error("nothing to report: no run logs or eval_" + split + ".jsonl in " + dir.string());
  for (const auto& w : written) std::cout << "wrote=" << (out / w).string() << '\n';
  return kExitOk;
}

void setup_logging(const std::string& level) {
  static const auto logger = [] {
    auto l = spdlog::stderr_color_mt("inconvad");
    spdlog::set_default_logger(l);
    return l;
  }();
  (void)logger;
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") throw CLI::ValidationError("--log-level", "unknown level " + level);
  spdlog::set_level(lvl);
}

}  // namespace

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Speech/text emotion regression with inconsistency-gated fusion", "inconvad"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "run config file (key=value with [sections])")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, std::string("run root directory (default $") + kOutEnv + " or ./inconvad_out)");
  app.add_option("--data", g.data, "corpus directory (default <out>/data)");
  app.add_option("--seed", g.seed, "seed for generation, initialization and shuffling");
  app.add_option("--threads", g.threads, "worker threads, 0 = all cores")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  GenOptions gen;
  auto* c_gen = app.add_subcommand("gen-data", "write the synthetic corpus");
  c_gen->add_option("--n", gen.n, "number of utterances");
  c_gen->add_option("--snr", gen.snr, "noise level in dB (inf disables noise)");
  c_gen->add_option("--inconsistent-fraction", gen.inconsistent_fraction, "share of y=0 pairs per split");

  AlignOptions al;
  auto* c_align = app.add_subcommand("align-labels", "map a label table onto the shared label scale");
  c_align->add_option("--labels", al.labels, "table with columns id, V, A, D")->required()->check(CLI::ExistingFile);
  c_align->add_option("--source", al.source, "source parameters")->check(CLI::ExistingFile);
  c_align->add_option("--target", al.target, "target parameters")->check(CLI::ExistingFile);
  c_align->add_option("--output", al.output, "output file");
  c_align->add_flag("--fit", al.fit, "fit parameters from the table instead of aligning it");
  c_align->add_option("--range", al.range, "native lo hi for --fit (default: table min and max)")->expected(2);

  std::string wav_path, prosody_out;
  auto* c_pros = app.add_subcommand("extract-prosody", "per-frame pitch and energy table for one WAV");
  c_pros->add_option("--wav", wav_path, "input WAV")->required()->check(CLI::ExistingFile);
  c_pros->add_option("--output", prosody_out, "output table (default stdout)");

  TrainOptions tr;
  auto* c_ta = app.add_subcommand("train-a", "train the speech and text towers");
  c_ta->add_option("--modality", tr.modality, "speech, text or both")
      ->check(CLI::IsMember({"speech", "text", "both"}))
      ->capture_default_str();
  for (auto* c : {c_ta, app.add_subcommand("train-b-cls", "train the inconsistency classifier on frozen towers"),
                  app.add_subcommand("train-b-fusion", "train the fusion tower on consistent pairs")}) {
    c->add_option("--train-manifest", tr.train_manifest, "override the training manifest");
    c->add_option("--val-manifest", tr.val_manifest, "override the validation manifest");
  }

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate all models on a split");
  c_eval->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  c_eval->add_option("--manifest", ev.manifest, "override the manifest (default <data>/pairs_<split>.tsv)");
  c_eval->add_flag("--json", ev.json_lines, "also print one JSON record per report");

  PredictOptions pr;
  auto* c_pred = app.add_subcommand("predict", "score one speech/text pair");
  c_pred->add_option("--wav", pr.wav, "speech WAV")->required()->check(CLI::ExistingFile);
  c_pred->add_option("--tokens", pr.tokens, "whitespace-separated transcript tokens")->required();
  c_pred->add_option("--id", pr.id, "record id echoed in the output");
  c_pred->add_option("--lexicon", pr.lexicon, "lexicon (default <data>/lexicon.tsv)");
  c_pred->add_option("--align-source", pr.align_source, "source label parameters for native-scale output");
  c_pred->add_option("--align-target", pr.align_target, "target label parameters for native-scale output");

  std::string report_split = "test";
  auto* c_rep = app.add_subcommand("report", "render SVG figures from run logs and eval records");
  c_rep->add_option("--split", report_split, "which eval_<split>.jsonl to plot")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    setup_logging(g.log_level);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "gen-data") return cmd_gen_data(g, gen);
    if (cmd == "align-labels") return cmd_align_labels(g, al);
    if (cmd == "extract-prosody") return cmd_extract_prosody(g, wav_path, prosody_out);
    if (cmd == "train-a") return cmd_train_a(g, tr);
    if (cmd == "train-b-cls") return cmd_train_b_cls(g, tr);
    if (cmd == "train-b-fusion") return cmd_train_b_fusion(g, tr);
    if (cmd == "eval") return cmd_eval(g, ev);
    if (cmd == "predict") return cmd_predict(g, pr);
    if (cmd == "report") return cmd_report(g, report_split);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace inconvad::cli

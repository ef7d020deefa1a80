#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "inconvad/config.hpp"
#include "inconvad/fusion_classifier.hpp"
#include "inconvad/label_alignment.hpp"
#include "inconvad/lexicon.hpp"
#include "inconvad/manifest.hpp"
#include "inconvad/metrics.hpp"
#include "inconvad/prosody.hpp"
#include "inconvad/towers.hpp"

// Two-phase training: unimodal towers first, then the classifier and the
// fusion tower on frozen tower outputs.
namespace inconvad::pipeline {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double lr_backbone = 2e-5;
  double lr_heads = 1e-4;
  double lr_classifier = 1e-3;
  double weight_decay = 0.01;
  double warmup_fraction = 0.1;
  std::string schedule = "cosine";
  std::uint64_t seed = 1;
  double grad_clip = 5.0;
  std::size_t threads = 1;  // 0 = hardware concurrency
  double margin = 0.9;
  double lambda_margin = 0.15;
  double lambda_agree = 1.0;
  double nll_beta = 0.0;  // towers: variance^beta weighting of the training NLL
  double labeled_fraction = 1.0;  // fusion: share of training records keeping VAD labels

  void validate() const;
  KeyValues to_key_values() const;
  // Values in `kv` override `defaults`.
  static TrainConfig from_key_values(const KeyValues& kv, const TrainConfig& defaults);
  static TrainConfig from_key_values(const KeyValues& kv);
};

// Whole-run configuration. Text form uses sections [tower], [prosody],
// [fusion], [train] (shared) and [train_a], [train_cls], [train_fusion]
// (per-phase overrides of [train]).
struct RunConfig {
  towers::TowerConfig tower;
  prosody::ProsodyConfig prosody;
  fusion::FusionConfig fusion;
  TrainConfig phase_a;
  TrainConfig classifier;
  TrainConfig fusion_train;
  std::string precomputed_dir;  // root of <split>/ feature archives when tower.acoustic_width > 0

  RunConfig();
  // A top-level `preset` key selects the base values that the remaining
  // keys override: "paper" (the full-size defaults) or "desk" (small widths
  // and short schedules that train on one CPU core in minutes).
  static KeyValues preset_key_values(const std::string& name);
  static RunConfig desk();
  void validate() const;
  KeyValues to_key_values() const;
  static RunConfig from_key_values(const KeyValues& kv);
};

// --------------------------------------------------------------- data

struct Example {
  std::string id;
  towers::SpeechInput speech;
  towers::TextInput text;
  std::optional<VadVector> vad;
  std::optional<int> y;
};
using Dataset = std::vector<Example>;

Dataset load_dataset(const std::vector<manifest::Record>& records, const RunConfig& cfg,
                     const lexicon::VadLexicon& lex, std::size_t threads = 1);

// --------------------------------------------------------------- run log

struct EpochRecord {
  std::size_t epoch = 0;
  std::map<std::string, double> train;  // mean loss components
  double val_metric = 0.0;
  std::map<std::string, double> val;
  double lr = 0.0;
};

struct RunLog {
  std::string phase;
  KeyValues config;
  std::vector<std::pair<std::string, std::string>> param_groups;  // parameter name -> group
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  bool stopped_early = false;
  std::map<std::string, double> summary;

  std::string to_jsonl() const;
  static RunLog from_jsonl(const std::string& text);
  void write(const std::string& path) const;
};

// ---------------------------------------------------------- Phase A

struct PhaseAResult {
  RunLog log;
  std::array<double, 3> val_ccc{};
  double val_ccc_avg = 0.0;
};

PhaseAResult train_speech_tower(towers::SpeechTower& tower, const Dataset& train, const Dataset& val,
                                const TrainConfig& cfg);
PhaseAResult train_text_tower(towers::TextTower& tower, const Dataset& train, const Dataset& val,
                              const TrainConfig& cfg);

std::vector<GaussianVad> predict_speech(const towers::SpeechTower& tower, const Dataset& data, std::size_t threads);
std::vector<GaussianVad> predict_text(const towers::TextTower& tower, const Dataset& data, std::size_t threads);

// Per-dimension CCC of prediction means against labels (records without
// labels are skipped).
std::array<double, 3> ccc_against(const std::vector<GaussianVad>& preds, const Dataset& data);

// ---------------------------------------------------------- Phase B

// Frozen tower outputs for one pair.
struct FrozenPair {
  std::string id;
  Matrix seq_s;
  std::vector<bool> mask_s;
  GaussianVad pred_s;
  Matrix seq_t;
  std::vector<bool> mask_t;
  GaussianVad pred_t;
  std::optional<VadVector> vad;
  std::optional<int> y;
};

std::vector<FrozenPair> freeze_outputs(const towers::SpeechTower& speech, const towers::TextTower& text,
                                       const Dataset& data, std::size_t threads);

struct ClassifierResult {
  RunLog log;
  double tau_star = 0.5;
  double val_f1 = 0.0;
};

ClassifierResult train_phase_b_classifier(fusion::InconsistencyClassifier& clf, const std::vector<FrozenPair>& train,
                                          const std::vector<FrozenPair>& val, const TrainConfig& cfg);

std::vector<double> classifier_scores(const fusion::InconsistencyClassifier& clf,
                                      const std::vector<FrozenPair>& data, std::size_t threads);

struct FusionResult {
  RunLog log;
  std::array<double, 3> val_ccc{};
  double val_ccc_avg = 0.0;
};

// Rejects any record with y = 0.
FusionResult train_phase_b_fusion(fusion::FusionTower& tower, const std::vector<FrozenPair>& train,
                                  const std::vector<FrozenPair>& val, const TrainConfig& cfg);

struct FusedPrediction {
  GaussianVad fused;
  double gate_s = 0.5;
  double gate_t = 0.5;
};
std::vector<FusedPrediction> fusion_predictions(const fusion::FusionTower& tower, const std::vector<FrozenPair>& data,
                                                std::size_t threads);

// --------------------------------------------------- checkpoints / inference

// Rounds parameter values to fp32 so in-memory models match their checkpoints.
void round_to_checkpoint_precision(const ag::ParamList& params);

void save_speech_tower(const std::string& path, towers::SpeechTower& tower);
void save_text_tower(const std::string& path, towers::TextTower& tower);
void save_classifier(const std::string& path, fusion::InconsistencyClassifier& clf, double tau_star);
void save_fusion(const std::string& path, fusion::FusionTower& tower);

std::unique_ptr<towers::SpeechTower> load_speech_tower(const std::string& path);
std::unique_ptr<towers::TextTower> load_text_tower(const std::string& path);
std::unique_ptr<fusion::InconsistencyClassifier> load_classifier(const std::string& path, double* tau_star);
std::unique_ptr<fusion::FusionTower> load_fusion(const std::string& path);

std::uint64_t tower_checksum(towers::SpeechTower& speech, towers::TextTower& text);

struct ModelSet {
  std::unique_ptr<towers::SpeechTower> speech;
  std::unique_ptr<towers::TextTower> text;
  std::unique_ptr<fusion::InconsistencyClassifier> classifier;
  std::unique_ptr<fusion::FusionTower> fusion;
  double tau = 0.5;
};

// Loads speech.ckpt, text.ckpt, classifier.ckpt and fusion.ckpt from `dir`.
ModelSet load_models(const std::string& dir);

// Label-scale mapping: predictions live in the target (aligned) space.
struct Alignment {
  align::VadBetaParams source;
  align::VadBetaParams target;
};

struct Prediction {
  std::string id;
  double p_inc = 0.0;
  double tau = 0.5;
  fusion::Decision decision = fusion::Decision::consistent;
  GaussianVad speech;
  GaussianVad text;
  std::optional<FusedPrediction> fused;  // only for consistent decisions
  // Native-scale means, present when an alignment is supplied.
  std::optional<VadVector> speech_native, text_native, fused_native;

  std::string to_json() const;
};

Prediction predict(const ModelSet& models, const Example& example, const Alignment* alignment = nullptr);

VadVector to_native(const VadVector& aligned, const Alignment& alignment);

// ------------------------------------------------------------ evaluation

struct Evaluation {
  metrics::EvalReport speech, text, fused, classifier;
  std::vector<Prediction> predictions;  // fused only for consistent decisions
  std::vector<FusedPrediction> all_fused;  // fusion output for every record
};

Evaluation evaluate(const ModelSet& models, const Dataset& data, std::size_t threads);
std::string format_evaluation(const Evaluation& ev);

}  // namespace inconvad::pipeline

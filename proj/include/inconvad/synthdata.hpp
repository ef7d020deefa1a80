#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "inconvad/config.hpp"
#include "inconvad/lexicon.hpp"
#include "inconvad/manifest.hpp"
#include "inconvad/types.hpp"
#include "inconvad/wav.hpp"

// Synthetic speech/text corpus with known VAD latents.
//
// Speech: voiced syllables (harmonic tones) separated by short silences.
// Arousal sets the pitch level, dominance the pitch-modulation depth and
// valence the signal energy; white noise is added at the configured SNR.
// Text: content words drawn from the toy lexicon near the latent plus
// out-of-lexicon filler words.
namespace inconvad::synth {

struct SynthConfig {
  std::size_t n_utterances = 2500;
  std::size_t speakers = 10;
  double snr_db = 10.0;  // infinity disables noise
  double neutral_radius = 0.1;
  double emotion_offset_min = 0.3;
  double neutral_fraction = 0.1;  // share of latents drawn inside the neutral box
  double inconsistent_fraction = 0.5;
  double min_duration_s = 0.7;
  double max_duration_s = 1.0;
  int sample_rate_hz = 16000;
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_key_values() const;
  static SynthConfig from_key_values(const KeyValues& kv);
};

// One synthetic pair with the latents that generated each side.
struct SynthRecord {
  manifest::Record record;
  VadVector z_speech;
  VadVector z_text;
  std::size_t speaker_index = 0;
  std::uint64_t speech_seed = 0;
};

// Tab-separated toy lexicon (values in [0, 1]).
std::string toy_lexicon_text();
lexicon::VadLexicon toy_lexicon();

double linf_from_center(const VadVector& z);

// Waveform for latent z; deterministic in (z, speaker, seed).
Waveform synthesize_speech(const VadVector& z, std::size_t speaker, const SynthConfig& cfg, std::uint64_t seed);
std::vector<std::string> synthesize_text(const VadVector& z, const lexicon::VadLexicon& lex, std::uint64_t seed);

// Target RMS for a valence value (log-linear in v).
double energy_target_rms(double v);

struct Corpus {
  std::vector<SynthRecord> train, val, test;
};

// Latents, tokens and split assignment (no audio rendered).
Corpus plan_corpus(const SynthConfig& cfg, const lexicon::VadLexicon& lex);

// Replaces the text of round(fraction * n) eligible records (speech latent
// at least emotion_offset_min from the centre in max-norm) with text from a
// neutral latent and labels them y = 0; the rest keep y = 1.
std::vector<SynthRecord> make_inconsistent_pairs(const std::vector<SynthRecord>& base, double fraction,
                                                 const SynthConfig& cfg, const lexicon::VadLexicon& lex,
                                                 std::uint64_t seed);

// Writes wav/, train|val|test.tsv (consistent), pairs_<split>.tsv,
// lexicon.tsv, synth_config.txt and the private latent log
// private/latents.tsv under `out_dir`.
Corpus generate_corpus(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace inconvad::synth

#include "inconvad/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "inconvad/prosody.hpp"

namespace inconvad::synth {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

// Small self-contained generator so corpora are identical across standard
// libraries (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix(state_);
  }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(unit() * static_cast<double>(n)); }
  double normal() {
    const double u1 = 1.0 - unit();
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::uint64_t state_;
};

constexpr std::array<const char*, 180> kAffectWords{
    "abandon", "absurd", "adore", "afraid", "aggressive", "agony", "alarm", "alert", "amaze", "amuse",
    "anger", "anguish", "annoy", "anxious", "apathy", "applause", "ardent", "ashamed", "assault", "awe",
    "awful", "bitter", "bless", "bliss", "bold", "bored", "brave", "bright", "brutal", "calm",
    "care", "celebrate", "charm", "cheer", "cherish", "comfort", "confident", "confused", "content", "courage",
    "cozy", "crash", "cruel", "cry", "curious", "danger", "dear", "defeat", "delight", "depressed",
    "desire", "despair", "destroy", "devoted", "disgust", "dismal", "doubt", "dread", "dreary", "eager",
    "ecstatic", "elated", "embrace", "enemy", "energetic", "enraged", "envy", "evil", "excited", "exhausted",
    "fail", "faith", "fear", "fierce", "fond", "fragile", "free", "fright", "frustrated", "fury",
    "gentle", "gift", "glad", "gloom", "glory", "grace", "grateful", "grief", "guilt", "happy",
    "harmony", "hate", "heaven", "helpless", "hero", "hope", "horror", "hostile", "humble", "hurt",
    "idle", "inspire", "insult", "irritate", "jealous", "joy", "kind", "kiss", "laugh", "lazy",
    "lively", "lonely", "lose", "love", "lucky", "mad", "magic", "master", "mellow", "mercy",
    "miracle", "misery", "mourn", "nasty", "nervous", "panic", "passion", "peace", "pity", "play",
    "pleasure", "power", "praise", "pride", "proud", "punish", "quiet", "rage", "regret", "relax",
    "relief", "rescue", "rest", "reward", "romance", "rude", "sad", "safe", "scare", "scream",
    "secure", "serene", "shame", "shock", "shy", "sick", "silly", "sleepy", "smile", "sorrow",
    "spite", "steady", "strong", "stress", "success", "suffer", "surprise", "sweet", "tender", "terror",
    "thrill", "timid", "torture", "tragic", "triumph", "trust", "upset", "victory", "warm", "weak"};

constexpr std::array<const char*, 20> kNeutralWords{
    "table", "window", "paper", "chair", "street", "water", "number", "minute", "report", "station",
    "corner", "bottle", "letter", "button", "carpet", "folder", "pencil", "ticket", "bucket", "ladder"};

constexpr std::array<const char*, 24> kFillerWords{
    "the", "a", "of", "and", "to", "it", "was", "that", "this", "with", "on", "for",
    "at", "by", "from", "so", "then", "just", "we", "they", "there", "is", "be", "as"};

double halton(std::size_t i, std::size_t base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

std::vector<std::pair<std::string, VadVector>> sorted_entries(const lexicon::VadLexicon& lex) {
  std::vector<std::pair<std::string, VadVector>> out(lex.entries.begin(), lex.entries.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

VadVector neutral_latent(Rng& rng, double radius) {
  return {0.5 + rng.range(-radius, radius), 0.5 + rng.range(-radius, radius), 0.5 + rng.range(-radius, radius)};
}

std::string two_digits(std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02zu", v);
  return buf;
}

std::string record_id(std::size_t speaker, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "s%02zu_%05zu", speaker, index);
  return buf;
}

}  // namespace

// ----------------------------------------------------------------- config

void SynthConfig::validate() const {
  if (n_utterances == 0) throw ConfigError("n_utterances must be positive");
  if (speakers < 3) throw ConfigError("speakers must be at least 3 for a train/val/test split");
  if (n_utterances < speakers) throw ConfigError("n_utterances must be at least the number of speakers");
  if (std::isnan(snr_db)) throw ConfigError("snr must be a number");
  if (!(neutral_radius > 0.0 && neutral_radius < 0.5)) throw ConfigError("neutral_radius must be in (0, 0.5)");
  if (!(emotion_offset_min > neutral_radius))
    throw ConfigError("emotion_offset_min must exceed neutral_radius");
  if (!(emotion_offset_min <= 0.5)) throw ConfigError("emotion_offset_min must be at most 0.5");
  if (!(neutral_fraction >= 0.0 && neutral_fraction < 1.0)) throw ConfigError("neutral_fraction must be in [0, 1)");
  if (!(inconsistent_fraction > 0.0 && inconsistent_fraction < 1.0))
    throw ConfigError("inconsistent_fraction must be in (0, 1)");
  if (!(min_duration_s >= 0.1 && max_duration_s >= min_duration_s))
    throw ConfigError("durations must satisfy 0.1 <= min <= max");
  if (sample_rate_hz < 8000) throw ConfigError("sample_rate_hz must be at least 8000");
}

KeyValues SynthConfig::to_key_values() const {
  KeyValues kv;
  kv.set("n_utterances", std::to_string(n_utterances));
  kv.set("speakers", std::to_string(speakers));
  kv.set("snr", format_double(snr_db));
  kv.set("neutral_radius", format_double(neutral_radius));
  kv.set("emotion_offset_min", format_double(emotion_offset_min));
  kv.set("neutral_fraction", format_double(neutral_fraction));
  kv.set("inconsistent_fraction", format_double(inconsistent_fraction));
  kv.set("min_duration_s", format_double(min_duration_s));
  kv.set("max_duration_s", format_double(max_duration_s));
  kv.set("sample_rate_hz", std::to_string(sample_rate_hz));
  kv.set("seed", std::to_string(seed));
  return kv;
}

SynthConfig SynthConfig::from_key_values(const KeyValues& kv) {
  SynthConfig c;
  c.n_utterances = static_cast<std::size_t>(kv.get_int_or("n_utterances", static_cast<long long>(c.n_utterances)));
  c.speakers = static_cast<std::size_t>(kv.get_int_or("speakers", static_cast<long long>(c.speakers)));
  c.snr_db = kv.get_double_or("snr", c.snr_db);
  c.neutral_radius = kv.get_double_or("neutral_radius", c.neutral_radius);
  c.emotion_offset_min = kv.get_double_or("emotion_offset_min", c.emotion_offset_min);
  c.neutral_fraction = kv.get_double_or("neutral_fraction", c.neutral_fraction);
  c.inconsistent_fraction = kv.get_double_or("inconsistent_fraction", c.inconsistent_fraction);
  c.min_duration_s = kv.get_double_or("min_duration_s", c.min_duration_s);
  c.max_duration_s = kv.get_double_or("max_duration_s", c.max_duration_s);
  c.sample_rate_hz = static_cast<int>(kv.get_int_or("sample_rate_hz", c.sample_rate_hz));
  c.seed = static_cast<std::uint64_t>(kv.get_int_or("seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

// ---------------------------------------------------------------- lexicon

std::string toy_lexicon_text() {
  std::ostringstream os;
  os << "#range 0 1\nword\tvalence\tarousal\tdominance\n";
  auto put = [&os](const char* w, double v, double a, double d) {
    os << w << '\t' << format_double(std::round(v * 1000.0) / 1000.0) << '\t'
       << format_double(std::round(a * 1000.0) / 1000.0) << '\t' << format_double(std::round(d * 1000.0) / 1000.0)
       << '\n';
  };
  for (std::size_t i = 0; i < kAffectWords.size(); ++i)
    put(kAffectWords[i], 0.03 + 0.94 * halton(i + 1, 2), 0.03 + 0.94 * halton(i + 1, 3),
        0.03 + 0.94 * halton(i + 1, 5));
  for (std::size_t i = 0; i < kNeutralWords.size(); ++i)
    put(kNeutralWords[i], 0.42 + 0.16 * halton(i + 1, 2), 0.42 + 0.16 * halton(i + 1, 3),
        0.42 + 0.16 * halton(i + 1, 5));
  return os.str();
}

lexicon::VadLexicon toy_lexicon() { return lexicon::parse_lexicon(toy_lexicon_text()); }

double linf_from_center(const VadVector& z) {
  return std::max({std::abs(z.v - 0.5), std::abs(z.a - 0.5), std::abs(z.d - 0.5)});
}

// ----------------------------------------------------------------- speech

double energy_target_rms(double v) { return 0.01 * std::exp(std::clamp(v, 0.0, 1.0) * std::log(15.0)); }

Waveform synthesize_speech(const VadVector& z, std::size_t speaker, const SynthConfig& cfg, std::uint64_t seed) {
  Rng spk(derive(cfg.seed, 0x5EA4E2, speaker));
  const double pitch_scale = 1.0 + spk.range(-0.05, 0.05);
  const double tilt = spk.range(0.45, 0.75);

  Rng rng(seed);
  const double fs = cfg.sample_rate_hz;
  const double duration = rng.range(cfg.min_duration_s, cfg.max_duration_s);
  const auto n = static_cast<std::size_t>(std::llround(duration * fs));
  const double base = (110.0 + 170.0 * z.a) * pitch_scale;
  // Dominance drives both the swing and the speed of the pitch contour so the
  // cue survives per-utterance normalization of the prosody channels.
  const double depth = 0.03 + 0.25 * z.d;
  const double rate = 2.0 + 6.0 * z.d + 0.5 * rng.unit();
  const double phi = 2.0 * std::numbers::pi * rng.unit();

  // Syllable layout: [start, end) sample ranges.
  std::vector<std::pair<std::size_t, std::size_t>> syllables;
  double t = rng.range(0.02, 0.05);
  while (t < duration) {
    const double len = rng.range(0.13, 0.22);
    syllables.emplace_back(static_cast<std::size_t>(t * fs), std::min(n, static_cast<std::size_t>((t + len) * fs)));
    t += len + rng.range(0.04, 0.09);
  }

  Waveform w;
  w.sample_rate_hz = cfg.sample_rate_hz;
  w.samples.assign(n, 0.0);
  const std::size_t ramp = static_cast<std::size_t>(0.02 * fs);
  double phase = 0.0;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f0 = base * (1.0 + depth * std::sin(2.0 * std::numbers::pi * rate * (i / fs) + phi));
    phase += 2.0 * std::numbers::pi * f0 / fs;
    while (next < syllables.size() && i >= syllables[next].second) ++next;
    if (next >= syllables.size() || i < syllables[next].first) continue;
    const auto [s, e] = syllables[next];
    const std::size_t from_start = i - s;
    const std::size_t to_end = e - 1 - i;
    double env = 1.0;
    const std::size_t edge = std::min(from_start, to_end);
    if (edge < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / ramp);
    double x = 0.0;
    double amp = 1.0;
    for (int h = 1; h <= 6; ++h, amp *= tilt) x += amp * std::sin(h * phase);
    w.samples[i] = env * x;
  }

  // Exact energy normalization over analysis frames.
  const auto framing = prosody::Framing::from_ms(25.0, 20.0, cfg.sample_rate_hz);
  const std::size_t frames = framing.frame_count(n);
  double mean_ms = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    double ms = 0.0;
    for (std::size_t k = 0; k < framing.frame_length; ++k) {
      const double x = w.samples[f * framing.hop + k];
      ms += x * x;
    }
    mean_ms += ms / static_cast<double>(framing.frame_length);
  }
  mean_ms /= static_cast<double>(frames);
  const double target = energy_target_rms(z.v);
  const double gain = mean_ms > 0.0 ? target / std::sqrt(mean_ms) : 0.0;
  for (double& x : w.samples) x *= gain;

  if (std::isfinite(cfg.snr_db)) {
    const double noise_sd = target / std::sqrt(std::pow(10.0, cfg.snr_db / 10.0));
    for (double& x : w.samples) x += noise_sd * rng.normal();
  }
  for (double& x : w.samples) x = std::clamp(x, -1.0, 32767.0 / 32768.0);
  return w;
}

// ------------------------------------------------------------------- text

std::vector<std::string> synthesize_text(const VadVector& z, const lexicon::VadLexicon& lex, std::uint64_t seed) {
  const auto entries = sorted_entries(lex);
  if (entries.empty()) throw std::invalid_argument("synthesize_text: empty lexicon");
  Rng rng(seed);
  std::vector<double> cumulative;
  double total = 0.0;
  constexpr double kSpread = 0.12;
  for (const auto& [word, p] : entries) {
    const double d2 = (p.v - z.v) * (p.v - z.v) + (p.a - z.a) * (p.a - z.a) + (p.d - z.d) * (p.d - z.d);
    total += std::exp(-d2 / (2.0 * kSpread * kSpread));
    cumulative.push_back(total);
  }
  std::vector<std::string> tokens;
  const std::size_t content = 4 + rng.index(4);
  for (std::size_t i = 0; i < content; ++i) {
    const double u = rng.unit() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    tokens.push_back(entries[std::min<std::size_t>(it - cumulative.begin(), entries.size() - 1)].first);
  }
  const std::size_t filler = 2 + rng.index(3);
  for (std::size_t i = 0; i < filler; ++i) tokens.emplace_back(kFillerWords[rng.index(kFillerWords.size())]);
  rng.shuffle(tokens);
  return tokens;
}

// ----------------------------------------------------------------- corpus

Corpus plan_corpus(const SynthConfig& cfg, const lexicon::VadLexicon& lex) {
  cfg.validate();
  std::vector<std::size_t> order(cfg.speakers);
  for (std::size_t s = 0; s < cfg.speakers; ++s) order[s] = s;
  Rng split_rng(derive(cfg.seed, 0x5B117));
  split_rng.shuffle(order);
  const std::size_t held = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.speakers * 0.1)));
  std::vector<std::string> split_of(cfg.speakers, "train");
  for (std::size_t i = 0; i < held; ++i) {
    split_of[order[i]] = "val";
    split_of[order[held + i]] = "test";
  }

  Corpus c;
  for (std::size_t i = 0; i < cfg.n_utterances; ++i) {
    const std::size_t speaker = i % cfg.speakers;
    Rng rng(derive(cfg.seed, 0x1A7E, i));
    VadVector z;
    if (rng.unit() < cfg.neutral_fraction)
      z = neutral_latent(rng, cfg.neutral_radius);
    else
      z = {rng.unit(), rng.unit(), rng.unit()};
    SynthRecord r;
    r.record.id = record_id(speaker, i);
    r.record.split = split_of[speaker];
    r.record.speaker = "spk" + two_digits(speaker);
    r.record.wav = "wav/" + r.record.id + ".wav";
    r.record.tokens = synthesize_text(z, lex, derive(cfg.seed, 0x7E47, i));
    r.record.vad = z;
    r.record.y = 1;
    r.z_speech = z;
    r.z_text = z;
    r.speaker_index = speaker;
    r.speech_seed = derive(cfg.seed, 0x5BEEC, i);
    (r.record.split == "train" ? c.train : r.record.split == "val" ? c.val : c.test).push_back(std::move(r));
  }
  return c;
}

std::vector<SynthRecord> make_inconsistent_pairs(const std::vector<SynthRecord>& base, double fraction,
                                                 const SynthConfig& cfg, const lexicon::VadLexicon& lex,
                                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("fraction must be in (0, 1)");
  const auto wanted = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(base.size())));
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < base.size(); ++i)
    if (linf_from_center(base[i].z_speech) >= cfg.emotion_offset_min) eligible.push_back(i);
  if (eligible.size() < wanted)
    throw std::invalid_argument("only " + std::to_string(eligible.size()) + " non-neutral records for " +
                                std::to_string(wanted) + " inconsistent pairs");
  Rng rng(seed);
  rng.shuffle(eligible);
  std::vector<SynthRecord> out = base;
  for (auto& r : out) {
    r.record.y = 1;
    r.z_text = r.z_speech;
  }
  for (std::size_t k = 0; k < wanted; ++k) {
    SynthRecord& r = out[eligible[k]];
    r.z_text = neutral_latent(rng, cfg.neutral_radius);
    r.record.tokens = synthesize_text(r.z_text, lex, rng.next());
    r.record.y = 0;
  }
  return out;
}

Corpus generate_corpus(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  const lexicon::VadLexicon lex = toy_lexicon();
  Corpus c = plan_corpus(cfg, lex);
  fs::create_directories(fs::path(out_dir) / "wav");
  std::ostringstream latents;
  latents << "id\tsplit\tkind\tspeech_v\tspeech_a\tspeech_d\ttext_v\ttext_a\ttext_d\ty\n";
  auto log_latent = [&latents](const SynthRecord& r, const char* kind) {
    latents << r.record.id << '\t' << r.record.split << '\t' << kind;
    for (std::size_t k = 0; k < 3; ++k) latents << '\t' << format_double(r.z_speech[k]);
    for (std::size_t k = 0; k < 3; ++k) latents << '\t' << format_double(r.z_text[k]);
    latents << '\t' << *r.record.y << '\n';
  };
  const std::array<std::pair<const char*, std::vector<SynthRecord>*>, 3> splits{
      {{"train", &c.train}, {"val", &c.val}, {"test", &c.test}}};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& [name, records] = splits[s];
    std::vector<manifest::Record> base_manifest;
    for (const auto& r : *records) {
      write_wav_pcm16((fs::path(out_dir) / r.record.wav).string(),
                      synthesize_speech(r.z_speech, r.speaker_index, cfg, r.speech_seed));
      base_manifest.push_back(r.record);
      log_latent(r, "base");
    }
    manifest::write((fs::path(out_dir) / (std::string(name) + ".tsv")).string(), base_manifest);
    const auto pairs =
        make_inconsistent_pairs(*records, cfg.inconsistent_fraction, cfg, lex, derive(cfg.seed, 0x9A125, s));
    std::vector<manifest::Record> pair_manifest;
    for (const auto& r : pairs) {
      pair_manifest.push_back(r.record);
      log_latent(r, "pair");
    }
    manifest::write((fs::path(out_dir) / ("pairs_" + std::string(name) + ".tsv")).string(), pair_manifest);
  }
  write_text_file((fs::path(out_dir) / "lexicon.tsv").string(), toy_lexicon_text());
  write_text_file((fs::path(out_dir) / "synth_config.txt").string(), format_key_values(cfg.to_key_values()));
  write_text_file((fs::path(out_dir) / "private" / "latents.tsv").string(), latents.str());
  return c;
}

}  // namespace inconvad::synth

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>

#include "inconvad/config.hpp"
#include "inconvad/manifest.hpp"
#include "inconvad/metrics.hpp"
#include "inconvad/prosody.hpp"
#include "inconvad/synthdata.hpp"

using namespace inconvad;
using namespace inconvad::synth;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("inconvad_synth_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

double median_voiced_pitch(const Waveform& w) {
  auto p = prosody::extract_pitch(w, 25, 20, 80, 400);
  p.erase(std::remove(p.begin(), p.end(), 0.0), p.end());
  if (p.empty()) return 0.0;
  std::nth_element(p.begin(), p.begin() + p.size() / 2, p.end());
  return p[p.size() / 2];
}

SynthConfig small(std::size_t n) {
  SynthConfig c;
  c.n_utterances = n;
  return c;
}

}  // namespace

TEST_SUITE("synthdata") {
  TEST_CASE("config invariants") {
    auto c = small(100);
    c.emotion_offset_min = 0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small(100);
    c.speakers = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small(100);
    c.snr_db = std::numeric_limits<double>::infinity();
    c.validate();
    const auto back = SynthConfig::from_key_values(c.to_key_values());
    CHECK(std::isinf(back.snr_db));
    CHECK(back.n_utterances == 100);
  }

  TEST_CASE("toy lexicon has 200 entries inside the unit cube") {
    const auto lex = toy_lexicon();
    CHECK(lex.size() == 200);
    for (const auto& [w, v] : lex.entries)
      for (int k = 0; k < 3; ++k) CHECK((v[k] >= 0.0 && v[k] <= 1.0));
  }

  TEST_CASE("speaker-disjoint 8/1/1 split") {
    const auto c = plan_corpus(small(500), toy_lexicon());
    std::map<std::string, std::set<std::string>> speakers;
    for (const auto* part : {&c.train, &c.val, &c.test})
      for (const auto& r : *part) speakers[r.record.speaker].insert(r.record.split);
    CHECK(speakers.size() == 10);
    std::map<std::string, int> per_split;
    for (const auto& [spk, splits] : speakers) {
      CHECK(splits.size() == 1);
      ++per_split[*splits.begin()];
    }
    CHECK(per_split["train"] == 8);
    CHECK(per_split["val"] == 1);
    CHECK(per_split["test"] == 1);
    CHECK(c.train.size() == 400);
  }

  TEST_CASE("same seed gives byte-identical corpora") {
    auto cfg = small(30);
    const auto a = scratch("a"), b = scratch("b");
    generate_corpus(cfg, a.string());
    generate_corpus(cfg, b.string());
    for (const char* f : {"train.tsv", "val.tsv", "test.tsv", "pairs_train.tsv", "pairs_test.tsv", "lexicon.tsv",
                          "private/latents.tsv"})
      CHECK(read_text_file((a / f).string()) == read_text_file((b / f).string()));
    const auto recs = manifest::read((a / "train.tsv").string());
    REQUIRE(!recs.empty());
    const auto wa = read_wav(recs[0].wav);
    const auto wb = read_wav((b / "wav" / (recs[0].id + ".wav")).string());
    CHECK(wa.samples == wb.samples);
    CHECK(wa.sample_rate_hz == 16000);

    cfg.seed = 2;
    const auto c = scratch("c");
    generate_corpus(cfg, c.string());
    CHECK(read_text_file((a / "train.tsv").string()) != read_text_file((c / "train.tsv").string()));
  }

  TEST_CASE("noise-free frame energy ranks exactly with valence") {
    auto cfg = small(40);
    cfg.snr_db = std::numeric_limits<double>::infinity();
    std::vector<double> v, energy;
    const auto framing = prosody::Framing::from_ms(25.0, 20.0, 16000);
    for (int i = 0; i < 40; ++i) {
      const VadVector z{(i * 37 % 40) / 40.0 + 0.01, 0.3 + 0.01 * (i % 7), 0.2 + 0.015 * (i % 11)};
      const auto w = synthesize_speech(z, i % 10, cfg, 1000 + i);
      double mean = 0.0;
      const std::size_t frames = framing.frame_count(w.samples.size());
      for (std::size_t f = 0; f < frames; ++f) {
        double ms = 0.0;
        for (std::size_t k = 0; k < framing.frame_length; ++k) ms += std::pow(w.samples[f * framing.hop + k], 2);
        mean += ms / framing.frame_length;
      }
      v.push_back(z.v);
      energy.push_back(mean / frames);
    }
    CHECK(metrics::pearson(ranks(v), ranks(energy)) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("inconsistent pair construction") {
    auto cfg = small(1000);
    const auto lex = toy_lexicon();
    const auto c = plan_corpus(cfg, lex);
    std::vector<SynthRecord> all = c.train;
    all.insert(all.end(), c.val.begin(), c.val.end());
    all.insert(all.end(), c.test.begin(), c.test.end());
    const auto pairs = make_inconsistent_pairs(all, 0.5, cfg, lex, 77);
    std::size_t inconsistent = 0;
    for (const auto& r : pairs) {
      if (*r.record.y == 0) {
        ++inconsistent;
        CHECK(linf_from_center(r.z_text) <= cfg.neutral_radius);
        CHECK(linf_from_center(r.z_speech) >= cfg.emotion_offset_min);
      } else {
        CHECK(r.z_text == r.z_speech);
      }
    }
    CHECK(inconsistent == 500);
    const auto again = make_inconsistent_pairs(all, 0.5, cfg, lex, 77);
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(again[i].record.tokens == pairs[i].record.tokens);
    CHECK_THROWS(make_inconsistent_pairs(all, 1.0, cfg, lex, 77));
  }

  TEST_CASE("latent oracle separates pairs and fusion manifests hold only consistent pairs") {
    auto cfg = small(60);
    const auto dir = scratch("oracle");
    generate_corpus(cfg, dir.string());
    const auto text = read_text_file((dir / "private" / "latents.tsv").string());
    std::size_t pairs = 0, correct = 0;
    for (const auto& line : split(text, '\n')) {
      const auto f = split(line, '\t');
      if (f.size() != 10 || f[0] == "id" || f[2] != "pair") continue;
      double dist = 0.0;
      for (int k = 0; k < 3; ++k) dist = std::max(dist, std::abs(std::stod(f[3 + k]) - std::stod(f[6 + k])));
      const int predicted = dist > 0.0 ? 0 : 1;
      correct += predicted == std::stoi(f[9]) ? 1 : 0;
      ++pairs;
    }
    CHECK(pairs == 60);
    CHECK(correct == pairs);
    for (const char* split_name : {"train.tsv", "val.tsv", "test.tsv"})
      for (const auto& r : manifest::read((dir / split_name).string())) CHECK(*r.y == 1);
  }

  TEST_CASE("the arousal cue in pitch sharpens as noise falls") {
    auto corr_at = [](double snr) {
      auto cfg = small(30);
      cfg.snr_db = snr;
      std::vector<double> a, pitch;
      for (int i = 0; i < 30; ++i) {
        const VadVector z{0.5, (i * 13 % 30) / 30.0, 0.5};
        a.push_back(z.a);
        pitch.push_back(median_voiced_pitch(synthesize_speech(z, i % 10, cfg, 500 + i)));
      }
      return metrics::pearson(a, pitch);
    };
    const double clean = corr_at(40.0), noisy = corr_at(-10.0);
    CHECK(clean > 0.95);
    CHECK(clean > noisy);
  }
}

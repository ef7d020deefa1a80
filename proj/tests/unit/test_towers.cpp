#include <doctest.h>

#include <cmath>
#include <numbers>

#include "inconvad/losses.hpp"
#include "inconvad/synthdata.hpp"
#include "inconvad/towers.hpp"
#include "support/gradcheck.hpp"
#include "support/tiny.hpp"

using namespace inconvad;
using namespace inconvad::towers;
using namespace testing_support;

namespace {

Waveform tone(std::size_t n, double hz = 180.0) {
  Waveform w;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(0.4 * std::sin(2 * std::numbers::pi * hz * i / 16000.0));
  return w;
}

TowerConfig small_config() {
  auto c = tiny_tower_config();
  c.fbank_bands = 40;
  c.n_conformer = 2;
  return c;
}

void check_prediction(const TowerOutput& out, std::size_t frames, std::size_t width) {
  const auto g = to_gaussian(out.prediction);
  CHECK(out.embedding.cols() == width);
  CHECK(out.sequence.rows() == frames);
  CHECK(out.sequence.cols() == width);
  CHECK(g.finite());
  CHECK(g.respects_floor());
}

}  // namespace

TEST_SUITE("towers") {
  TEST_CASE("config validation and round trip") {
    TowerConfig c;
    c.d_model = 10;
    c.n_heads = 4;
    CHECK_THROWS(c.validate());
    c = TowerConfig{};
    c.conv_kernel = 4;
    CHECK_THROWS(c.validate());
    c = small_config();
    c.prosody_injection = false;
    const auto back = TowerConfig::from_key_values(c.to_key_values());
    CHECK(back.d_model == c.d_model);
    CHECK(back.fbank_bands == 40);
    CHECK_FALSE(back.prosody_injection);
  }

  TEST_CASE("toy speech encoder frame count, silence and determinism") {
    SpeechTower tower(small_config(), 1);
    const auto f = toy_speech_encoder(tower, tone(16000));
    CHECK(f.length() == 49);
    CHECK(f.width() == 8);
    Waveform silent;
    silent.samples.assign(16000, 0.0);
    for (double v : toy_speech_encoder(tower, silent).frames.flat()) CHECK(std::isfinite(v));
    CHECK(toy_speech_encoder(tower, tone(16000)).frames == f.frames);
  }

  TEST_CASE("speech tower forward contract") {
    SpeechTower tower(small_config(), 2);
    const auto in = prepare_speech(tone(12000), tower.config());
    ag::Graph g1, g2;
    const auto a = tower.forward(g1, in);
    check_prediction(a, in.frames(), 8);
    const auto b = tower.forward(g2, in);
    CHECK(a.embedding.value() == b.embedding.value());
    CHECK(a.prediction.mu.value() == b.prediction.mu.value());
  }

  TEST_CASE("prosody toggle changes the output") {
    auto on = small_config();
    auto off = on;
    off.prosody_injection = false;
    SpeechTower t_on(on, 3), t_off(off, 3);
    auto w = tone(12000);
    for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] *= 0.1 + static_cast<double>(i) / w.samples.size();
    const auto in = prepare_speech(w, on);
    ag::Graph g;
    CHECK(t_on.forward(g, in).prediction.mu.value() != t_off.forward(g, in).prediction.mu.value());
  }

  TEST_CASE("precomputed speech features") {
    auto c = small_config();
    c.acoustic_width = 12;
    SpeechTower tower(c, 4);
    const auto w = tone(16000);
    const FeatureSequence feats(random_matrix(49, 12, 5));
    const auto in = prepare_speech_precomputed(feats, w, c);
    CHECK(in.prosody.rows() == 49);
    ag::Graph g;
    check_prediction(tower.forward(g, in), 49, 8);
    CHECK_THROWS(prepare_speech_precomputed(FeatureSequence(random_matrix(49, 7, 5)), w, c));
  }

  TEST_CASE("text tower forward contract, single token and empty input") {
    const auto lex = synth::toy_lexicon();
    TextTower tower(small_config(), 5);
    ag::Graph g;
    const auto in = prepare_text({"the", "joyful", "Day"}, lex, tower.config());
    check_prediction(tower.forward(g, in), 3, 8);
    check_prediction(tower.forward(g, prepare_text({"calm"}, lex, tower.config())), 1, 8);
    CHECK_THROWS(prepare_text({}, lex, tower.config()));
  }

  TEST_CASE("FiLM bypass makes the text tower independent of the lexicon") {
    auto c = small_config();
    c.film_gating = false;
    TextTower tower(c, 6);
    const auto toy = synth::toy_lexicon();
    const auto other = lexicon::parse_lexicon("joyful\t0\t0\t0\nday\t1\t1\t1\n");
    const std::vector<std::string> toks{"joyful", "day", "quiet"};
    ag::Graph g;
    const auto a = tower.forward(g, prepare_text(toks, toy, c)).prediction.mu.value();
    const auto b = tower.forward(g, prepare_text(toks, other, c)).prediction.mu.value();
    CHECK(a == b);

    c.film_gating = true;
    TextTower gated(c, 6);
    CHECK(gated.forward(g, prepare_text(toks, toy, c)).prediction.mu.value() !=
          gated.forward(g, prepare_text(toks, other, c)).prediction.mu.value());
  }

  TEST_CASE("masked frames never change any tower output") {
    SpeechTower speech(small_config(), 7);
    auto in = tiny_speech_input(9, 8, 40);
    in.mask = {true, true, false, true, true, false, true, true, false};
    ag::Graph g;
    const auto a = speech.forward(g, in);
    for (std::size_t c = 0; c < 40; ++c) {
      in.acoustic(2, c) = 50.0;
      in.acoustic(8, c) = -50.0;
    }
    in.prosody(5, 0) = 1e3;
    const auto b = speech.forward(g, in);
    CHECK(a.embedding.value() == b.embedding.value());
    CHECK(a.prediction.mu.value() == b.prediction.mu.value());
    CHECK(a.prediction.log_var.value() == b.prediction.log_var.value());
    for (std::size_t r = 0; r < 9; ++r)
      if (in.mask[r])
        for (std::size_t c = 0; c < 8; ++c) CHECK(a.sequence.value()(r, c) == b.sequence.value()(r, c));

    TextTower text(small_config(), 8);
    auto tin = tiny_text_input(6, 9);
    tin.mask = {true, false, true, true, false, true};
    const auto ta = text.forward(g, tin);
    tin.ids[1] = (tin.ids[1] + 5) % 16;
    tin.priors(4, 0) = 0.99;
    tin.priors(4, 2) = 0.01;
    const auto tb = text.forward(g, tin);
    CHECK(ta.embedding.value() == tb.embedding.value());
    CHECK(ta.prediction.mu.value() == tb.prediction.mu.value());
  }

  TEST_CASE("token buckets are stable and case folded") {
    CHECK(token_bucket("Happy", 4096) == token_bucket("happy", 4096));
    CHECK(token_bucket("happy", 4096) < 4096);
  }

  TEST_CASE("tiny speech tower NLL gradient matches finite differences") {
    auto c = tiny_tower_config();
    SpeechTower tower(c, 11);
    const auto in = tiny_speech_input(5, 12);
    const VadVector y{0.3, 0.6, 0.8};
    const auto r = check_gradients(
        [&](ag::Graph& g, const std::vector<ag::Var>&) {
          const auto out = tower.forward(g, in);
          return losses::graph::gaussian_nll(out.prediction.mu, out.prediction.log_var, y);
        },
        {}, tower.parameters());
    INFO("worst: " << r.worst);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.tensors == tower.parameters().size());
  }

  TEST_CASE("tiny text tower NLL gradient matches finite differences") {
    TextTower tower(tiny_tower_config(), 13);
    const auto in = tiny_text_input(5, 14);
    const VadVector y{0.7, 0.2, 0.4};
    const auto r = check_gradients(
        [&](ag::Graph& g, const std::vector<ag::Var>&) {
          const auto out = tower.forward(g, in);
          return losses::graph::gaussian_nll(out.prediction.mu, out.prediction.log_var, y);
        },
        {}, tower.parameters());
    INFO("worst: " << r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "inconvad/config.hpp"
#include "inconvad/lexicon.hpp"
#include "inconvad/synthdata.hpp"

using namespace inconvad;
using namespace inconvad::lexicon;

namespace {
const char* kSmall = "#range -1 1\nhappy\t0.8\t0.4\t0.2\ncalm\t0\t-0.5\t0\ncalm\t0.2\t-0.6\t0.1\n";
}

TEST_SUITE("lexicon") {
  TEST_CASE("range rescale and last-wins duplicates") {
    const auto lex = parse_lexicon(kSmall);
    const auto* h = lex.find("happy");
    REQUIRE(h);
    CHECK(h->v == doctest::Approx(0.9));
    CHECK(h->a == doctest::Approx(0.7));
    CHECK(h->d == doctest::Approx(0.6));
    const auto* c = lex.find("calm");
    REQUIRE(c);
    CHECK(c->v == doctest::Approx(0.6));
    CHECK(c->a == doctest::Approx(0.2));
    CHECK(lex.duplicates == 1);
    CHECK(lex.size() == 2);
  }

  TEST_CASE("keys are case folded") {
    const auto lex = parse_lexicon("HaPpy\t0.5\t0.5\t0.5\n");
    CHECK(lex.find("happy"));
    const auto seq = priors_for_tokens({"HAPPY"}, lex);
    CHECK(seq.coverage == 1.0);
  }

  TEST_CASE("parse errors name the line") {
    try {
      parse_lexicon("good\t0.5\t0.5\t0.5\nbad\t0.5\tx\t0.5\n");
      FAIL("expected a parse error");
    } catch (const LexiconParseError& e) {
      CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_lexicon(""), LexiconParseError);
    CHECK_THROWS_AS(parse_lexicon("#range 0 1\n"), LexiconParseError);
    CHECK_THROWS_AS(parse_lexicon("word\t0.5\t0.5\n"), LexiconParseError);
  }

  TEST_CASE("values outside the declared range are clamped") {
    const auto lex = parse_lexicon("word\t2\t-0.5\t0.5\n");
    const auto p = priors_for_tokens({"word"}, lex);
    CHECK(p.priors[0].v == 1.0);
    CHECK(p.priors[0].a == 0.0);
    CHECK(p.priors[0].d == 0.5);
  }

  TEST_CASE("lookups") {
    const auto lex = parse_lexicon(kSmall);
    const auto empty = priors_for_tokens({}, lex);
    CHECK(empty.priors.empty());
    CHECK(empty.coverage == 0.0);

    const auto oov = priors_for_tokens({"zebra", "qwerty"}, lex);
    for (const auto& p : oov.priors) CHECK(p == kNeutralPrior);
    CHECK(oov.coverage == 0.0);

    const auto one = priors_for_tokens({"happy"}, lex);
    REQUIRE(one.priors.size() == 1);
    CHECK(one.priors[0].v == doctest::Approx(0.9));
    CHECK(one.coverage == 1.0);
    CHECK(one.as_matrix().cols() == 3);
  }

  TEST_CASE("subword markers and word alignment") {
    const auto lex = parse_lexicon(kSmall);
    CHECK(strip_subword_marker("##ppy") == "ppy");
    CHECK(strip_subword_marker("\xC4\xA0happy") == "happy");
    CHECK(strip_subword_marker("\xE2\x96\x81happy") == "happy");
    CHECK(priors_for_tokens({"\xE2\x96\x81happy"}, lex).coverage == 1.0);

    const std::vector<std::string> pieces{"ha", "##ppy", "zz"};
    const std::vector<int> ids{0, 0, 1};
    const auto seq = priors_for_tokens(pieces, lex, &ids);
    CHECK(seq.priors[0] == *lex.find("happy"));
    CHECK(seq.priors[1] == *lex.find("happy"));
    CHECK(seq.priors[2] == kNeutralPrior);
  }

  TEST_CASE("length, range and order properties on random token lists") {
    const auto lex = synth::toy_lexicon();
    std::vector<std::string> vocab;
    for (const auto& [w, v] : lex.entries) vocab.push_back(w);
    std::sort(vocab.begin(), vocab.end());
    vocab.push_back("unknownword");
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::string> toks(rng() % 20);
      for (auto& t : toks) t = vocab[rng() % vocab.size()];
      const auto seq = priors_for_tokens(toks, lex);
      REQUIRE(seq.priors.size() == toks.size());
      for (const auto& p : seq.priors)
        for (int k = 0; k < 3; ++k) CHECK((p[k] >= 0.0 && p[k] <= 1.0));
      std::vector<std::size_t> perm(toks.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<std::string> shuffled;
      for (auto i : perm) shuffled.push_back(toks[i]);
      const auto seq2 = priors_for_tokens(shuffled, lex);
      for (std::size_t i = 0; i < perm.size(); ++i) CHECK(seq2.priors[i] == seq.priors[perm[i]]);
    }
  }

  TEST_CASE("shipped toy lexicon matches the built-in table") {
    const auto path = std::filesystem::path(INCONVAD_SOURCE_DIR) / "data" / "toy_lexicon.tsv";
    CHECK(read_text_file(path.string()) == synth::toy_lexicon_text());
    const auto lex = load_lexicon(path.string());
    CHECK(lex.size() == 200);
  }
}

#include <doctest.h>

#include <cmath>

#include "inconvad/fusion_classifier.hpp"
#include "support/gradcheck.hpp"
#include "support/tiny.hpp"

using namespace inconvad;
using namespace inconvad::fusion;
using namespace testing_support;

namespace {

void zero(nn::Linear& l) {
  l.weight.value.fill(0.0);
  if (!l.bias.value.empty()) l.bias.value.fill(0.0);
}

const std::vector<bool> kAll4(4, true), kAll3(3, true);

}  // namespace

TEST_SUITE("fusion_classifier") {
  TEST_CASE("config validation") {
    auto c = tiny_fusion_config();
    c.proj_width = 7;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_fusion_config();
    c.transformer_block = false;
    const auto back = FusionConfig::from_key_values(c.to_key_values());
    CHECK_FALSE(back.transformer_block);
    CHECK(back.proj_width == 8);
  }

  TEST_CASE("projected pair shapes, constant frames and masking") {
    InconsistencyClassifier clf(tiny_fusion_config(), 1);
    Graph g;
    const auto p = clf.project(g, g.constant(random_matrix(5, 8, 2)), std::vector<bool>(5, true),
                               g.constant(random_matrix(3, 8, 3)), kAll3);
    CHECK(p.s.rows() == 5);
    CHECK(p.t.rows() == 3);
    CHECK(p.pooled_s.cols() == 8);
    CHECK(p.pooled_t.cols() == 8);

    Matrix same(4, 8);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 8; ++c) same(r, c) = 0.1 * c - 0.2;
    const auto q = clf.project(g, g.constant(same), kAll4, g.constant(same), kAll4);
    for (std::size_t c = 0; c < 8; ++c) CHECK(q.pooled_s.value()(0, c) == doctest::Approx(q.s.value()(2, c)));

    auto hs = random_matrix(4, 8, 4);
    const std::vector<bool> mask{true, false, true, true};
    const auto a = clf.project(g, g.constant(hs), mask, g.constant(random_matrix(3, 8, 5)), kAll3);
    hs(1, 0) = 1e4;
    const auto b = clf.project(g, g.constant(hs), mask, g.constant(random_matrix(3, 8, 5)), kAll3);
    CHECK(a.pooled_s.value() == b.pooled_s.value());
    CHECK_THROWS(clf.project(g, g.constant(random_matrix(4, 6, 1)), kAll4, g.constant(random_matrix(3, 8, 5)), kAll3));
  }

  TEST_CASE("classifier output range, ordering and zero network") {
    InconsistencyClassifier clf(tiny_fusion_config(), 6);
    Graph g;
    auto hs = g.constant(random_matrix(4, 8, 7)), ht = g.constant(random_matrix(3, 8, 8));
    const auto pair = clf.project(g, hs, kAll4, ht, kAll3);
    const double p = clf.classify(g, pair).scalar();
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    ProjectedPair swapped = pair;
    std::swap(swapped.pooled_s, swapped.pooled_t);
    CHECK(clf.classify(g, swapped).scalar() != p);

    for (auto* l : {&clf.speech_projector.linear, &clf.text_projector.linear, &clf.hidden, &clf.output}) zero(*l);
    CHECK(clf.classify(g, clf.project(g, hs, kAll4, ht, kAll3)).scalar() == 0.5);
  }

  TEST_CASE("cross-modal block shapes, zero branches and masked keys") {
    std::mt19937_64 rng(9);
    CrossModalBlock block("b", 8, 2, 2, rng);
    const auto s = random_matrix(4, 8, 10);
    auto t = random_matrix(3, 8, 11);
    Graph g;
    const auto out = block(g, g.constant(s), kAll4, g.constant(t), kAll3, 0.0);
    CHECK(out.f_s.rows() == 4);
    CHECK(out.f_t.rows() == 3);

    const std::vector<bool> mask_t{true, false, true};
    const auto a = block(g, g.constant(s), kAll4, g.constant(t), mask_t, 0.0).f_s.value();
    t(1, 4) = 123.0;
    CHECK(block(g, g.constant(s), kAll4, g.constant(t), mask_t, 0.0).f_s.value() == a);

    for (auto* side : {&block.speech, &block.text}) {
      zero(side->self_attn.o);
      zero(side->cross_attn.o);
      zero(side->ffn.down);
    }
    nn::LayerNorm ln("ln", 8, ag::ParamGroup::heads);
    const auto expect = ln(g, ln(g, g.constant(s))).value();
    const auto f1 = block(g, g.constant(s), kAll4, g.constant(t), kAll3, 0.0).f_s.value();
    const auto f2 = block(g, g.constant(s), kAll4, g.constant(random_matrix(3, 8, 12)), kAll3, 0.0).f_s.value();
    CHECK(f1 == f2);
    for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f1[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }

  TEST_CASE("gates are normalized, symmetric when tied, and saturate") {
    FusionTower tower(tiny_fusion_config(), 13);
    Graph g;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto out = tower.gated_fuse(g, g.constant(random_matrix(4, 8, seed, 3.0)), kAll4,
                                        g.constant(random_matrix(3, 8, seed + 100, 3.0)), kAll3);
      CHECK(std::abs(out.gate_s.scalar() + out.gate_t.scalar() - 1.0) < 1e-6);
    }
    tower.gate_t.weight.value = tower.gate_s.weight.value;
    const auto f = g.constant(random_matrix(4, 8, 14));
    const auto tied = tower.gated_fuse(g, f, kAll4, f, kAll4);
    CHECK(tied.gate_s.scalar() == doctest::Approx(0.5));
    for (std::size_t c = 0; c < 8; ++c)
      CHECK(tied.h_f.value()[c] == doctest::Approx(tied.pooled_s.value()[c]).epsilon(1e-12));

    const auto fs = g.constant(random_matrix(4, 8, 15)), ft = g.constant(random_matrix(3, 8, 16));
    const auto pooled = tower.pool(g, fs, kAll4).value();
    double sq = 0.0;
    for (double v : pooled.flat()) sq += v * v;
    for (std::size_t c = 0; c < 8; ++c) tower.gate_s.weight.value[c] = 50.0 * pooled[c] / sq;
    tower.gate_t.weight.value.fill(0.0);
    const auto sat = tower.gated_fuse(g, fs, kAll4, ft, kAll3);
    for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(sat.h_f.value()[c] - pooled[c]) < 1e-6);
  }

  TEST_CASE("fusion forward contract and ablation toggles") {
    FusionTower tower(tiny_fusion_config(), 17);
    Graph g;
    auto hs = g.constant(random_matrix(4, 8, 18)), ht = g.constant(random_matrix(3, 8, 19));
    const auto a = tower.forward(g, hs, kAll4, ht, kAll3);
    const auto b = tower.forward(g, hs, kAll4, ht, kAll3);
    CHECK(a.prediction.mu.value() == b.prediction.mu.value());
    CHECK(towers::to_gaussian(a.prediction).respects_floor());

    auto cfg = tiny_fusion_config();
    cfg.transformer_block = false;
    FusionTower bypass(cfg, 17);
    const auto out = bypass.forward(g, hs, kAll4, ht, kAll3);
    const auto p = project_pair(g, bypass.speech_projector, bypass.text_projector, hs, kAll4, ht, kAll3);
    const auto direct = bypass.gated_fuse(g, p.s, kAll4, p.t, kAll3);
    CHECK(out.gates.h_f.value() == direct.h_f.value());
    CHECK(bypass.parameters().size() < tower.parameters().size());

    cfg = tiny_fusion_config();
    cfg.gated_fusion = false;
    FusionTower fixed(cfg, 17);
    const auto half = fixed.forward(g, hs, kAll4, ht, kAll3);
    CHECK(half.gates.gate_s.scalar() == 0.5);
    CHECK(half.gates.gate_t.scalar() == 0.5);
  }

  TEST_CASE("decision rule") {
    CHECK(decide(0.4, 0.4) == Decision::inconsistent);
    CHECK(decide(0.0, 0.01) == Decision::consistent);
    CHECK(decide(1.0, 1.0) == Decision::inconsistent);
    CHECK(decide(0.39, 0.4) == Decision::consistent);
    CHECK_THROWS(decide(0.5, 1.5));
    CHECK(std::string(decision_name(Decision::consistent)) == "consistent");
  }

  TEST_CASE("classifier and fusion gradients match finite differences") {
    InconsistencyClassifier clf(tiny_fusion_config(), 20);
    FusionTower tower(tiny_fusion_config(), 21);
    const auto hs = random_matrix(4, 8, 22), ht = random_matrix(3, 8, 23);
    auto r = check_gradients(
        [&](Graph& g, const std::vector<Var>& v) {
          return clf.classify(g, clf.project(g, v[0], kAll4, v[1], kAll3));
        },
        {hs, ht}, clf.parameters());
    INFO("classify worst: " << r.worst);
    CHECK(r.max_rel_error < 1e-4);

    r = check_gradients(
        [&](Graph& g, const std::vector<Var>& v) {
          const auto out = tower.forward(g, v[0], kAll4, v[1], kAll3);
          return ag::add(ag::sum_all(out.prediction.mu), ag::sum_all(ag::scale(out.prediction.log_var, 0.3)));
        },
        {hs, ht}, tower.parameters());
    INFO("fusion worst: " << r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "oracles.hpp"
#include "rrs/crrs.hpp"

namespace rrs {
namespace {

LatentFactorModel spread_model(std::size_t n, std::size_t m, std::size_t d, std::uint64_t seed) {
  auto model = init_model(n, m, d, seed);
  model.emb_a *= 20.0;
  model.emb_b *= 20.0;
  return model;
}

std::vector<UserId> full_order(const RowScorer& scorer, Side side, UserId u, std::size_t count) {
  std::vector<double> row(count);
  scorer(side, u, row);
  return top_k_indices(row, {}, count);
}

double unit(Rng& rng) { return 0.001 + 0.998 * uniform_unit(rng); }

TEST(Init, CopiesAreIndependent) {
  const auto backbone = spread_model(4, 5, 3, 1);
  auto models = init_from_pretrained(backbone);
  for (UserId a = 0; a < 4; ++a) {
    for (UserId b = 0; b < 5; ++b) {
      const auto y = potential_outcomes(models, a, b);
      const double s = score(backbone, a, b);
      EXPECT_EQ(y.y10, s);
      EXPECT_EQ(y.y11, s);
      EXPECT_EQ(y.y01, s);
    }
  }
  models.f10.emb_a(0, 0) += 1.0;
  EXPECT_EQ(models.f11, backbone);
  EXPECT_EQ(models.f01, backbone);
  EXPECT_EQ(models.pretrained, backbone);
  EXPECT_THROW(potential_outcomes(models, 4, 0), IndexError);
}

TEST(Init, ZeroEmbeddingsGiveOneHalf) {
  auto backbone = init_model(2, 2, 2, 0);
  backbone.emb_a.setZero();
  backbone.emb_b.setZero();
  const auto y = potential_outcomes(init_from_pretrained(backbone), 1, 1);
  EXPECT_EQ(y.y10, 0.5);
  EXPECT_EQ(y.y11, 0.5);
  EXPECT_EQ(y.y01, 0.5);
}

TEST(SimpleScores, Examples) {
  const auto s = simple_scores({0.5, 0.5, 0.5});
  EXPECT_EQ(s.s_a, 1.0);
  EXPECT_EQ(s.s_b, 1.0);
  const auto z = simple_scores({0.3, 0.0, 0.7});
  EXPECT_EQ(z.s_a, 0.3);
  EXPECT_EQ(z.s_b, 0.7);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const PotentialOutcomes y{unit(rng), unit(rng), unit(rng)};
    const auto t = simple_scores(y);
    EXPECT_NEAR(t.s_a - t.s_b, y.y10 - y.y01, 1e-15);
  }
  const auto w = simple_scores({0.2, 0.4, 0.6}, {2.0, 0.5});
  EXPECT_DOUBLE_EQ(w.s_a, 0.6);
  EXPECT_DOUBLE_EQ(w.s_b, 1.4);
}

TEST(SimpleScores, PostInitRankingEqualsBackbone) {
  const auto backbone = spread_model(6, 7, 4, 2);
  const auto models = init_from_pretrained(backbone);
  const auto simple = simple_row_scorer(models);
  const auto base = row_scorer(backbone);
  for (UserId a = 0; a < 6; ++a) EXPECT_EQ(full_order(simple, Side::A, a, 7), full_order(base, Side::A, a, 7));
  for (UserId b = 0; b < 7; ++b) EXPECT_EQ(full_order(simple, Side::B, b, 6), full_order(base, Side::B, b, 6));
}

TEST(Rerank, MutualStrategyWins) {
  const auto s = rerank_scores({0.5, 0.9, 0.4}, 0.1, 0.2);
  EXPECT_EQ(best_strategy({0.5, 0.9, 0.4}, 0.1, 0.2), Treatment::T11);
  EXPECT_EQ(s.s_a, 0.9);
  EXPECT_EQ(s.s_b, 0.9);
}

TEST(Rerank, OneSidedWinnerZeroesOtherSide) {
  const PotentialOutcomes y{0.5, 0.6, 0.1};
  EXPECT_EQ(best_strategy(y, 0.05, 0.3), Treatment::T10);
  const auto s = rerank_scores(y, 0.05, 0.3);
  EXPECT_EQ(s.s_a, 0.5);
  EXPECT_EQ(s.s_b, 0.0);
}

TEST(Rerank, VacantSlotsWin) {
  const PotentialOutcomes y{0.1, 0.1, 0.1};
  EXPECT_EQ(best_strategy(y, 0.9, 0.9), Treatment::T00);
  const auto s = rerank_scores(y, 0.9, 0.9);
  EXPECT_EQ(s.s_a, 0.0);
  EXPECT_EQ(s.s_b, 0.0);
}

TEST(Rerank, TiesPreferSingleSidedStrategies) {
  // every strategy is worth 0.5
  EXPECT_EQ(best_strategy({0.25, 0.5, 0.25}, 0.25, 0.25), Treatment::T10);
  // 01 and 11 tie above 10 and 00
  EXPECT_EQ(best_strategy({0.125, 0.75, 0.5}, 0.25, 0.25), Treatment::T01);
  // 11 and 00 tie above the others
  EXPECT_EQ(best_strategy({0.125, 0.75, 0.125}, 0.375, 0.375), Treatment::T11);
}

TEST(Rerank, SelectedStrategyIsOptimalAndExclusive) {
  Rng rng(5);
  constexpr Treatment all[] = {Treatment::T10, Treatment::T01, Treatment::T11, Treatment::T00};
  for (int i = 0; i < 2000; ++i) {
    const PotentialOutcomes y{unit(rng), unit(rng), unit(rng)};
    const double ya = unit(rng), yb = unit(rng);
    const auto best = best_strategy(y, ya, yb);
    for (auto t : all) EXPECT_GE(strategy_value(best, y, ya, yb), strategy_value(t, y, ya, yb));
    const auto s = rerank_scores(y, ya, yb);
    switch (best) {
      case Treatment::T11:
        EXPECT_EQ(s.s_a, y.y11);
        EXPECT_EQ(s.s_b, y.y11);
        break;
      case Treatment::T10:
        EXPECT_EQ(s.s_a, y.y10);
        EXPECT_EQ(s.s_b, 0.0);
        break;
      case Treatment::T01:
        EXPECT_EQ(s.s_a, 0.0);
        EXPECT_EQ(s.s_b, y.y01);
        break;
      case Treatment::T00:
        EXPECT_EQ(s.s_a, 0.0);
        EXPECT_EQ(s.s_b, 0.0);
        break;
    }
  }
}

TEST(Rerank, MonotoneInMutualOutcome) {
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    PotentialOutcomes y{unit(rng), unit(rng), unit(rng)};
    const double ya = unit(rng), yb = unit(rng);
    const auto before = rerank_scores(y, ya, yb);
    y.y11 = std::min(0.999, y.y11 + 0.5 * uniform_unit(rng));
    const auto after = rerank_scores(y, ya, yb);
    EXPECT_GE(after.s_a, before.s_a);
    EXPECT_GE(after.s_b, before.s_b);
  }
}

TEST(VacantSlot, ConstantFieldAndSingleSample) {
  auto backbone = init_model(3, 6, 2, 0);
  backbone.emb_a.setZero();
  backbone.emb_b.setZero();
  Rng rng(1);
  EXPECT_EQ(vacant_slot_value(backbone, Side::A, 0, 4, rng, {}).ybar, 0.5);

  const auto model = spread_model(3, 6, 2, 3);
  Rng r1(7), r2(7);
  const auto est = vacant_slot_value(model, Side::B, 2, 1, r1, {});
  EXPECT_EQ(est.sample_size, 1u);
  bool found = false;
  for (UserId a = 0; a < 3; ++a) found = found || score(model, a, 2) == est.ybar;
  EXPECT_TRUE(found);
  EXPECT_EQ(vacant_slot_value(model, Side::B, 2, 1, r2, {}).ybar, est.ybar);
}

TEST(VacantSlot, FullSampleMatchesExhaustiveScan) {
  const auto model = spread_model(8, 9, 3, 4);
  const std::vector<UserId> excl_a{1, 4, 5};
  const std::vector<UserId> excl_b{0, 7};
  for (std::size_t q : {1u, 3u}) {
    for (UserId u = 0; u < 8; ++u) {
      Rng rng(u);
      const auto est = vacant_slot_value(model, Side::A, u, 100, rng, excl_a, q);
      EXPECT_EQ(est.sample_size, 6u);
      EXPECT_NEAR(est.ybar, oracle::exhaustive_ybar(model, Side::A, u, excl_a, q), 1e-15);
    }
    for (UserId u = 0; u < 9; ++u) {
      Rng rng(u);
      EXPECT_NEAR(vacant_slot_value(model, Side::B, u, 100, rng, excl_b, q).ybar,
                  oracle::exhaustive_ybar(model, Side::B, u, excl_b, q), 1e-15);
    }
  }
}

TEST(VacantSlot, NoCandidatesThrows) {
  const auto model = spread_model(2, 2, 2, 1);
  Rng rng(0);
  const std::vector<UserId> all{0, 1};
  EXPECT_THROW(vacant_slot_value(model, Side::A, 0, 10, rng, all), SamplingError);
}

TEST(VacantSlot, CacheIsOrderIndependent) {
  const auto model = spread_model(10, 12, 3, 5);
  const std::vector<Pair> pairs{{0, 1}, {0, 2}, {3, 4}, {9, 11}};
  const MatchSet excl(10, 12, pairs);
  VacantSlotCache forward(model, excl, 4, 99);
  VacantSlotCache backward(model, excl, 4, 99);
  std::vector<double> fa, ba;
  for (UserId u = 0; u < 10; ++u) fa.push_back(forward.get(Side::A, u));
  for (UserId u = 12; u-- > 0;) backward.get(Side::B, u);
  for (UserId u = 10; u-- > 0;) ba.insert(ba.begin(), backward.get(Side::A, u));
  EXPECT_EQ(fa, ba);
  for (UserId u = 0; u < 12; ++u) EXPECT_EQ(forward.get(Side::B, u), backward.get(Side::B, u));
  EXPECT_EQ(forward.size(), 22u);
  EXPECT_EQ(forward.get(Side::A, 0), fa[0]);
}

struct Routing {
  TreatmentSets sets;
  MatchSet known;
};

Routing routing_fixture() {
  Routing r;
  r.sets.d10 = {{0, 0}};
  r.sets.d11 = {{1, 1}};
  r.sets.d01 = {{2, 2}};
  const std::vector<Pair> all{{0, 0}, {1, 1}, {2, 2}};
  r.known = MatchSet(4, 4, all);
  return r;
}

TEST(PlanBatch, OneSidedPairsFeedOnlyTheirModel) {
  const auto r = routing_fixture();
  Rng rng(1);
  const std::vector<Pair> batch{{0, 0}};
  const auto plan = plan_batch(batch, r.sets, r.known, rng);
  ASSERT_EQ(plan.t10.counterfactual.size(), 1u);
  EXPECT_EQ(plan.t10.counterfactual[0].side, NegativeSide::B);
  EXPECT_TRUE(plan.t11.counterfactual.empty());
  EXPECT_TRUE(plan.t01.counterfactual.empty());
  for (const auto* t : {&plan.t10, &plan.t11, &plan.t01}) EXPECT_EQ(t->pretrain.size(), 2u);

  const std::vector<Pair> other{{2, 2}};
  const auto p01 = plan_batch(other, r.sets, r.known, rng);
  ASSERT_EQ(p01.t01.counterfactual.size(), 1u);
  EXPECT_EQ(p01.t01.counterfactual[0].side, NegativeSide::A);
  EXPECT_TRUE(p01.t10.counterfactual.empty());
}

TEST(PlanBatch, MutualPairContributesFourTerms) {
  const auto r = routing_fixture();
  Rng rng(2);
  const std::vector<Pair> batch{{1, 1}};
  const auto plan = plan_batch(batch, r.sets, r.known, rng);
  EXPECT_EQ(plan.t11.counterfactual.size(), 2u);
  EXPECT_EQ(plan.t10.counterfactual.size(), 1u);
  EXPECT_EQ(plan.t01.counterfactual.size(), 1u);
  EXPECT_EQ(plan.t10.counterfactual[0].side, NegativeSide::B);
  EXPECT_EQ(plan.t01.counterfactual[0].side, NegativeSide::A);
  for (const auto& t : plan.t11.counterfactual) {
    const auto& excl = r.known.of(t.side == NegativeSide::A ? Side::A : Side::B,
                                  t.side == NegativeSide::A ? t.a : t.b);
    EXPECT_FALSE(std::binary_search(excl.begin(), excl.end(), t.neg));
  }
}

InteractionLog toy_log() {
  InteractionLog log{6, 6, {}};
  for (UserId a = 0; a < 6; ++a) {
    log.interactions.push_back({a, a, true, true});
    if (a % 2 == 0) log.interactions.push_back({a, a, false, true});
    log.interactions.push_back({a, static_cast<UserId>((a + 1) % 6), a % 3 != 0, true});
  }
  return log;
}

TEST(Finetune, DeterministicAndWarnsOnEmptySets) {
  const auto log = toy_log();
  const auto sets = derive_treatment_sets(log);
  const MatchSet val(6, 6, log.matched_pairs());
  FinetuneConfig cfg;
  cfg.train.max_epochs = 4;
  cfg.train.batch_size = 4;
  cfg.train.eval_k = 2;
  cfg.train.learning_rate = 0.01;
  const auto init = init_from_pretrained(init_model(6, 6, 4, 3));
  const auto x = counterfactual_finetune(init, sets, log, val, cfg);
  const auto y = counterfactual_finetune(init, sets, log, val, cfg);
  EXPECT_EQ(x.models.f10, y.models.f10);
  EXPECT_EQ(x.models.f11, y.models.f11);
  EXPECT_EQ(x.models.f01, y.models.f01);
  EXPECT_EQ(x.models.pretrained, init.pretrained);
  EXPECT_TRUE(x.warnings.empty());

  TreatmentSets only10 = sets;
  only10.d01.clear();
  only10.d11.clear();
  const auto z = counterfactual_finetune(init, only10, log, val, cfg);
  EXPECT_EQ(z.warnings.size(), 2u);
}

TEST(Checkpoint, TreatmentModelsRoundTrip) {
  auto models = init_from_pretrained(spread_model(3, 4, 2, 8));
  models.f10.emb_a(1, 1) = 0.25;
  models.f01.emb_b(2, 0) = -1.5;
  const auto dir = std::filesystem::temp_directory_path() / "rrs_test_treatment";
  std::filesystem::create_directories(dir);
  save_treatment_models(dir / "t.json", models, "finetuned");
  std::string stage;
  const auto back = load_treatment_models(dir / "t.json", &stage);
  EXPECT_EQ(stage, "finetuned");
  EXPECT_EQ(back.f10, models.f10);
  EXPECT_EQ(back.f11, models.f11);
  EXPECT_EQ(back.f01, models.f01);
  EXPECT_EQ(back.pretrained, models.pretrained);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace rrs

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "oracles.hpp"
#include "rrs/backbone.hpp"
#include "rrs/dataset.hpp"

namespace rrs {
namespace {

LatentFactorModel random_model(std::size_t n, std::size_t m, std::size_t d, std::uint64_t seed,
                               bool bias) {
  auto model = init_model(n, m, d, seed, bias);
  model.emb_a *= 10.0;
  model.emb_b *= 10.0;
  if (bias) {
    Rng rng(seed + 1);
    for (auto& v : model.bias_a) v = standard_normal(rng);
    for (auto& v : model.bias_b) v = standard_normal(rng);
  }
  return model;
}

LatentFactorModel zero_model(std::size_t n, std::size_t m, std::size_t d) {
  auto model = init_model(n, m, d, 0);
  model.emb_a.setZero();
  model.emb_b.setZero();
  return model;
}

TEST(Init, DeterministicAndCentred) {
  const auto x = init_model(200, 200, 16, 42);
  EXPECT_EQ(x, init_model(200, 200, 16, 42));
  EXPECT_FALSE(x == init_model(200, 200, 16, 43));
  const double sd = 0.1 / 4.0;
  const double se = sd / std::sqrt(200.0 * 16.0);
  EXPECT_LT(std::abs(x.emb_a.mean()), 3.0 * se);
  EXPECT_LT(std::abs(x.emb_b.mean()), 3.0 * se);
  const double var = (x.emb_a.array() - x.emb_a.mean()).square().mean();
  EXPECT_NEAR(std::sqrt(var), sd, 0.1 * sd);
}

TEST(Score, LogisticOfDotProduct) {
  auto model = zero_model(2, 2, 2);
  EXPECT_EQ(score(model, 0, 0), 0.5);
  model.emb_a.row(0) << 1.0, 0.0;
  model.emb_b.row(1) << 1.0, 0.0;
  EXPECT_NEAR(score(model, 0, 1), 0.7310585786300049, 1e-15);
}

TEST(Score, InvariantUnderLatentAxisPermutation) {
  const auto model = random_model(4, 5, 3, 7, false);
  auto permuted = model;
  permuted.emb_a.col(0).swap(permuted.emb_a.col(2));
  permuted.emb_b.col(0).swap(permuted.emb_b.col(2));
  for (UserId a = 0; a < 4; ++a)
    for (UserId b = 0; b < 5; ++b) EXPECT_DOUBLE_EQ(score(model, a, b), score(permuted, a, b));
}

TEST(Score, RowMatchesPairwiseAndRangeChecked) {
  const auto model = random_model(3, 4, 2, 3, true);
  std::vector<double> row(4);
  model.logit_row(Side::A, 1, row);
  for (UserId b = 0; b < 4; ++b) EXPECT_DOUBLE_EQ(row[b], model.logit(1, b));
  std::vector<double> col(3);
  model.logit_row(Side::B, 2, col);
  for (UserId a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(col[a], model.logit(a, 2));
  EXPECT_THROW(score(model, 3, 0), IndexError);
  EXPECT_THROW(score(model, 0, 4), IndexError);
}

TEST(Bpr, TiedScoresGiveLnTwo) {
  const auto model = zero_model(2, 2, 2);
  const std::vector<BprTriple> triples{{0, 0, 1, NegativeSide::A}, {0, 0, 1, NegativeSide::B}};
  EXPECT_NEAR(bpr_loss_and_grad(model, triples, 0.0).loss, std::log(2.0), 1e-15);
}

TEST(Bpr, VanishesForLargeMarginAndStaysPositive) {
  auto model = zero_model(2, 2, 1);
  model.emb_a(0, 0) = 10.0;
  model.emb_b(0, 0) = 10.0;
  model.emb_b(1, 0) = -10.0;
  const std::vector<BprTriple> t{{0, 0, 1, NegativeSide::A}};
  const double loss = bpr_loss_and_grad(model, t, 0.0).loss;
  EXPECT_GT(loss, 0.0);
  EXPECT_LT(loss, 1e-80);
  EXPECT_EQ(neg_log_sigmoid(-800.0), 800.0);
}

TEST(Bpr, GradientMatchesFiniteDifferences) {
  for (bool bias : {false, true}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto model = random_model(3, 3, 2, seed, bias);
      const std::vector<BprTriple> triples{{0, 1, 2, NegativeSide::A},
                                           {2, 0, 1, NegativeSide::B},
                                           {1, 1, 0, NegativeSide::A},
                                           {1, 2, 0, NegativeSide::B}};
      const double l2 = 0.01;
      const auto analytic = bpr_loss_and_grad(model, triples, l2);
      const auto numeric = oracle::finite_difference(
          model, [&](const LatentFactorModel& x) { return bpr_loss_and_grad(x, triples, l2).loss; },
          1e-5);
      EXPECT_LT(oracle::max_relative_error(analytic.grad, numeric), 1e-4)
          << "seed " << seed << " bias " << bias;
    }
  }
}

TEST(Bpr, EmptyBatchContributesNothing) {
  const auto model = random_model(2, 2, 2, 1, false);
  const auto r = bpr_loss_and_grad(model, {}, 0.1);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad.grad_a.norm(), 0.0);
}

TEST(SampleNegative, ForcedChoice) {
  Rng rng(1);
  const std::vector<UserId> excl{0, 1, 3, 4};
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_negative(excl, 5, rng), 2u);
}

TEST(SampleNegative, UniformOverFreeIds) {
  Rng rng(2);
  for (const std::vector<UserId>& excl : {std::vector<UserId>{1, 4}, std::vector<UserId>{0, 1, 2, 3, 4, 5, 6, 7}}) {
    const std::size_t total = excl.size() + 5;
    std::vector<std::size_t> counts(total, 0);
    for (int i = 0; i < 5000; ++i) ++counts[sample_negative(excl, total, rng)];
    std::vector<std::size_t> free;
    for (std::size_t c = 0; c < total; ++c) {
      if (std::binary_search(excl.begin(), excl.end(), c)) {
        EXPECT_EQ(counts[c], 0u);
      } else {
        free.push_back(counts[c]);
      }
    }
    EXPECT_GT(oracle::chi_square_uniform_p(free), 0.01);
  }
}

TEST(SampleNegative, NothingLeftThrows) {
  Rng rng(3);
  const std::vector<UserId> excl{0, 1, 2};
  EXPECT_THROW(sample_negative(excl, 3, rng), SamplingError);
  EXPECT_THROW(sample_negative({}, 0, rng), SamplingError);
}

TEST(Adam, FirstStepMovesAgainstGradientByLearningRate) {
  auto model = zero_model(1, 1, 2);
  auto grads = Gradients::zeros_like(model);
  grads.grad_a(0, 0) = 3.0;
  grads.grad_a(0, 1) = -0.5;
  auto state = make_optimizer(model, AdamParams{0.01});
  adam_step(model, state, grads);
  EXPECT_NEAR(model.emb_a(0, 0), -0.01, 1e-9);
  EXPECT_NEAR(model.emb_a(0, 1), 0.01, 1e-9);
  EXPECT_EQ(model.emb_b(0, 0), 0.0);
  EXPECT_EQ(state.step, 1u);
}

struct Benchmark {
  DatasetSplit split;
  MatchSet validation;
};

Benchmark synthetic_benchmark() {
  SyntheticParams p;
  p.seed = derive_seed(0, "synthetic");
  auto log = generate_synthetic(p);
  auto core = k_core_filter(log, 5);
  Benchmark b{split(core.log, {0.8, 0.1, 0.1}, derive_seed(0, "split")), {}};
  b.validation = MatchSet(b.split.validation.side_a_count, b.split.validation.side_b_count,
                          b.split.validation.matched_pairs());
  return b;
}

TEST(Train, LossNonIncreasingOverFirstEpochs) {
  const auto b = synthetic_benchmark();
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.eval_k = 10;
  cfg.seed = 9;
  const auto init = init_model(b.split.train.side_a_count, b.split.train.side_b_count, 16, 1);
  const auto r = train(init, b.split.train, b.validation, cfg);
  ASSERT_EQ(r.history.size(), 5u);
  for (std::size_t i = 1; i < r.history.size(); ++i)
    EXPECT_LE(r.history[i].loss, r.history[i - 1].loss) << "epoch " << i + 1;
}

TEST(Train, DeterministicForFixedSeed) {
  const auto b = synthetic_benchmark();
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.eval_k = 10;
  const auto init = init_model(b.split.train.side_a_count, b.split.train.side_b_count, 8, 1);
  const auto x = train(init, b.split.train, b.validation, cfg);
  const auto y = train(init, b.split.train, b.validation, cfg);
  EXPECT_EQ(x.best, y.best);
  EXPECT_EQ(x.best_epoch, y.best_epoch);
}

TEST(Train, PatienceOneStopsAfterTwoFlatEpochs) {
  const std::vector<Pair> pos{{0, 0}, {1, 1}};
  const MatchSet known(3, 3, pos);
  TrainConfig cfg;
  cfg.patience = 1;
  cfg.max_epochs = 50;
  const auto r = train_on_pairs(init_model(3, 3, 2, 0), pos, known,
                                [](const LatentFactorModel&) { return 0.0; }, cfg);
  EXPECT_EQ(r.history.size(), 2u);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.best_epoch, 1u);
}

TEST(Train, SeparableToyRanksMatchedPairFirst) {
  const std::vector<Pair> pos{{0, 0}};
  const MatchSet known(2, 2, pos);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 1;
  cfg.max_epochs = 500;
  cfg.patience = 500;
  cfg.l2_weight = 0.0;
  const auto r = train_on_pairs(init_model(2, 2, 2, 5, true), pos, known,
                                [](const LatentFactorModel& m) { return m.logit(0, 0); }, cfg);
  const auto& m = r.best;
  EXPECT_GT(m.logit(0, 0), m.logit(0, 1));
  EXPECT_GT(m.logit(0, 0), m.logit(1, 0));
  EXPECT_GT(m.logit(0, 0), m.logit(1, 1));
}

TEST(Train, RejectsEmptyLogAndBadConfig) {
  const MatchSet none(2, 2, std::vector<Pair>{});
  EXPECT_THROW(train_on_pairs(init_model(2, 2, 2, 0), {}, none,
                              [](const LatentFactorModel&) { return 0.0; }, TrainConfig{}),
               ValidationError);
  TrainConfig bad;
  bad.learning_rate = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto model = random_model(4, 3, 5, 11, true);
  CheckpointMeta meta{17, AdamParams{0.02}};
  const auto dir = std::filesystem::temp_directory_path() / "rrs_test_checkpoint";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "model.json", model, meta);
  CheckpointMeta back;
  EXPECT_EQ(load_checkpoint(dir / "model.json", &back), model);
  EXPECT_EQ(back.optimizer_step, 17u);
  EXPECT_EQ(back.adam.learning_rate, 0.02);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsForeignDocuments) {
  EXPECT_THROW(model_from_checkpoint_json("{\"format\": \"other\"}"), ValidationError);
  EXPECT_THROW(model_from_checkpoint_json("not json"), ValidationError);
}

}  // namespace
}  // namespace rrs

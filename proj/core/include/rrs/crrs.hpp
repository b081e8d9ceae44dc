#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rrs/backbone.hpp"
#include "rrs/dataset.hpp"
#include "rrs/random.hpp"

namespace rrs {

// Treatment assignment (T_A, T_B). T_A = 1 means b is recommended to a.
enum class Treatment : std::uint8_t { T10, T01, T11, T00 };

std::string_view to_string(Treatment t) noexcept;

struct TreatmentModels {
  LatentFactorModel f10;
  LatentFactorModel f11;
  LatentFactorModel f01;
  LatentFactorModel pretrained;

  LatentFactorModel& model(Treatment t);
  const LatentFactorModel& model(Treatment t) const;
};

// Deep copies of the stage-1 backbone.
TreatmentModels init_from_pretrained(const LatentFactorModel& backbone);

struct PotentialOutcomes {
  double y10 = 0.0;
  double y11 = 0.0;
  double y01 = 0.0;
};

PotentialOutcomes potential_outcomes(const TreatmentModels& models, UserId a, UserId b);

struct ScoreWeights {
  double direct = 1.0;  // weight on y10 (side A) and y01 (side B)
  double mutual = 1.0;  // weight on y11
};

struct PairScores {
  double s_a = 0.0;  // ranking score of b in a's list
  double s_b = 0.0;  // ranking score of a in b's list
};

PairScores simple_scores(const PotentialOutcomes& y, const ScoreWeights& w = {});

// Strategy values: t10 -> y10 + ybar_b, t01 -> y01 + ybar_a, t11 -> y11,
// t00 -> ybar_a + ybar_b. Ties resolve in the order 10, 01, 11, 00.
Treatment best_strategy(const PotentialOutcomes& y, double ybar_a, double ybar_b);
double strategy_value(Treatment t, const PotentialOutcomes& y, double ybar_a, double ybar_b);

// s_a = [t11] y11 + [t10] y10,  s_b = [t11] y11 + [t01] y01
PairScores rerank_scores(const PotentialOutcomes& y, double ybar_a, double ybar_b);

struct VacantSlotEstimate {
  Side side = Side::A;
  UserId user = 0;
  double ybar = 0.0;
  std::size_t sample_size = 0;
};

// Samples up to `sample_size` opposite-side users outside `sorted_exclusions`
// without replacement, scores each with the pretrained backbone and returns
// the mean of the top `top_q` scores. Throws SamplingError if no candidate
// exists.
VacantSlotEstimate vacant_slot_value(const LatentFactorModel& pretrained, Side side, UserId user,
                                     std::size_t sample_size, Rng& rng,
                                     std::span<const UserId> sorted_exclusions,
                                     std::size_t top_q = 1);

// Write-once cache of vacant-slot estimates for one evaluation. Each
// (side, user) draws from its own generator seeded from the cache seed, so
// estimates do not depend on query order.
class VacantSlotCache {
 public:
  VacantSlotCache(const LatentFactorModel& pretrained, const MatchSet& exclusions,
                  std::size_t sample_size, std::uint64_t seed, std::size_t top_q = 1);

  double get(Side side, UserId user);
  std::size_t size() const noexcept { return cache_.size(); }

 private:
  const LatentFactorModel& pretrained_;
  const MatchSet& exclusions_;
  std::size_t sample_size_;
  std::uint64_t seed_;
  std::size_t top_q_;
  std::map<std::pair<Side, UserId>, double> cache_;
};

struct FinetuneConfig {
  TrainConfig train;  // learning rate, batch size, epochs, patience, seed, l2, eval_k
  ScoreWeights weights;
};

struct FinetuneRecord {
  std::size_t epoch = 0;
  double loss10 = 0.0;
  double loss11 = 0.0;
  double loss01 = 0.0;
  double validation = 0.0;
};

struct FinetuneResult {
  TreatmentModels models;
  std::vector<FinetuneRecord> history;
  std::size_t best_epoch = 0;
  std::vector<std::string> warnings;
};

// Per-batch BPR terms for one treatment model, split into the counterfactual
// part and the pretraining part.
struct BatchTerms {
  std::vector<BprTriple> counterfactual;
  std::vector<BprTriple> pretrain;
};

struct BatchPlan {
  BatchTerms t10;
  BatchTerms t11;
  BatchTerms t01;
};

// Routes one mini-batch of matched pairs into per-model BPR terms. Every pair
// draws one negative b' for its A-side user and one negative a' for its
// B-side user, shared by all terms of that pair:
//   d01 -> L01 gets (a, b) vs (a, b')
//   d10 -> L10 gets (a, b) vs (a', b)
//   d11 -> L11 gets both, L01 gets (a, b) vs (a, b'), L10 gets (a, b) vs (a', b)
// The pretraining terms use fresh negatives for every model.
BatchPlan plan_batch(std::span<const Pair> batch, const TreatmentSets& sets, const MatchSet& known,
                     Rng& rng);

// Stage 2. Each model minimises mean(counterfactual terms) + mean(pretraining
// terms) with its own Adam state; early stopping tracks the average side
// Recall@eval_k of simple_scores on `validation`.
FinetuneResult counterfactual_finetune(const TreatmentModels& models, const TreatmentSets& sets,
                                       const InteractionLog& train, const MatchSet& validation,
                                       const FinetuneConfig& config);

// Row scorers for full ranking.
RowScorer simple_row_scorer(const TreatmentModels& models, const ScoreWeights& w = {});
RowScorer rerank_row_scorer(const TreatmentModels& models, VacantSlotCache& cache);

// {"format": "rrs.treatment_models", "version": 1, "stage": ..., "pretrained",
//  "f10", "f11", "f01"} with each model in the backbone checkpoint layout.
void save_treatment_models(const std::filesystem::path& path, const TreatmentModels& models,
                           const std::string& stage);
TreatmentModels load_treatment_models(const std::filesystem::path& path,
                                      std::string* stage = nullptr);

}  // namespace rrs

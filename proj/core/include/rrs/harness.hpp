#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rrs/backbone.hpp"
#include "rrs/dataset.hpp"
#include "rrs/metrics.hpp"
#include "rrs/random.hpp"
#include "rrs/ranking.hpp"

namespace rrs {

enum class CandidatePolicy : std::uint8_t { All, ExcludeTrainValPositives };

struct EvalConfig {
  std::size_t k = 50;
  CandidatePolicy candidate_policy = CandidatePolicy::ExcludeTrainValPositives;
  std::size_t ybar_sample_size = 100;
  std::size_t ybar_top_q = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Evaluation targets (test matches) and the pairs removed from candidate
// pools under the configured policy (train + validation matches).
struct EvalContext {
  MatchSet targets;
  MatchSet exclusions;
  CandidatePolicy policy = CandidatePolicy::ExcludeTrainValPositives;

  const MatchSet* exclude() const {
    return policy == CandidatePolicy::All ? nullptr : &exclusions;
  }
};

EvalContext make_eval_context(const DatasetSplit& split, const EvalConfig& config);

struct Evaluation {
  ScoredRun ranked;
  MetricReport report;
};

Evaluation full_rank_evaluate(const RowScorer& scorer, const EvalContext& context, std::size_t k);
Evaluation full_rank_evaluate(const RowScorer& scorer, const DatasetSplit& split,
                              const EvalConfig& config);

struct AdjustmentReport {
  std::size_t replaced = 0;
  std::size_t skipped = 0;  // no eligible substitute existed
};

struct AdjustResult {
  RecommendationRun run;
  AdjustmentReport report;
};

// For each mutually-hit matched pair, rewrites the later-ranked occurrence
// (side B on equal ranks) with another matched counterpart of that user that
// is currently hit on neither side. Substitutes are drawn uniformly from the
// eligible set.
AdjustResult adjust_uni(const RecommendationRun& run, const MatchSet& matches, Rng& rng);

// For each one-sided hit (side A lists first, then side B, ranks ascending),
// rewrites the entry with a matched counterpart that already recommends this
// user from the other side, turning it into a mutual hit.
AdjustResult adjust_rep(const RecommendationRun& run, const MatchSet& matches, Rng& rng);

struct RankHistogram {
  std::vector<std::size_t> counts;  // counts[i]: redundant entries at rank i + 1

  std::size_t total() const;
};

RankHistogram redundancy_rank_histogram(const RecommendationRun& run, const MatchSet& matches);
std::string to_json(const RankHistogram& histogram);

// Two independent backbones, one per recommendation direction.
struct DualModels {
  LatentFactorModel side_a;
  LatentFactorModel side_b;
};

struct DualTraining {
  DualModels models;
  TrainResult result_a;
  TrainResult result_b;
};

// With per_side = true the A-side model learns d10 + d11 with negatives for
// the A-side user and is early-stopped on side-A recall (B symmetric). With
// per_side = false both models reproduce single-backbone training.
DualTraining train_dual(const LatentFactorModel& init, const InteractionLog& train,
                        const MatchSet& validation, const TrainConfig& config, bool per_side = true);

RowScorer dual_row_scorer(const DualModels& models);

MetricReport run_baseline_dual(const LatentFactorModel& init, const DatasetSplit& split,
                               const TrainConfig& train_config, const EvalConfig& eval_config,
                               bool per_side = true);

// `<user_id>\t<rank>\t<counterpart_id>\t<score>` per line, ranks 1-based.
void write_run_dump(std::ostream& out, const ScoredRun& run, Side side);
// Rebuilds one side of a run from a dump. Lists for users absent from the
// dump stay empty.
void read_run_dump(std::istream& in, ScoredRun& run, Side side);

}  // namespace rrs

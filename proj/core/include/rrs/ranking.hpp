#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rrs/metrics.hpp"
#include "rrs/types.hpp"

namespace rrs {

// Fills `out` (sized to the opposite side's population) with the score of
// every counterpart for (side, user). Higher is better.
using RowScorer = std::function<void(Side side, UserId user, std::span<double> out)>;

// A run together with the score of every listed entry.
struct ScoredRun {
  RecommendationRun run;
  std::vector<std::vector<double>> scores_a;
  std::vector<std::vector<double>> scores_b;

  const std::vector<double>& scores(Side s, UserId u) const {
    return s == Side::A ? scores_a.at(u) : scores_b.at(u);
  }
};

// Sorts candidate indices by descending score, ties by ascending id, and
// keeps the first k. Excluded ids (sorted) are skipped.
std::vector<UserId> top_k_indices(std::span<const double> scores,
                                  std::span<const UserId> sorted_excluded, std::size_t k);

// Full ranking for every user with at least one pair in `targets` on the
// requested side. `exclude`, when non-null, removes its pairs from each
// user's candidate pool, except pairs that are themselves in `targets`.
void rank_side(ScoredRun& out, const RowScorer& scorer, Side side, const MatchSet& targets,
               const MatchSet* exclude, std::size_t k);

ScoredRun rank_top_k(const RowScorer& scorer, const MatchSet& targets, const MatchSet* exclude,
                     std::size_t k);

}  // namespace rrs

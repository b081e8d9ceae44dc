#include "rrs/ranking.hpp"

#include <algorithm>
#include <iterator>
#include <numeric>

namespace rrs {

std::vector<UserId> top_k_indices(std::span<const double> scores,
                                  std::span<const UserId> sorted_excluded, std::size_t k) {
  std::vector<UserId> candidates;
  candidates.reserve(scores.size());
  std::size_t ex = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    while (ex < sorted_excluded.size() && sorted_excluded[ex] < i) ++ex;
    if (ex < sorted_excluded.size() && sorted_excluded[ex] == i) continue;
    candidates.push_back(static_cast<UserId>(i));
  }
  const std::size_t keep = std::min(k, candidates.size());
  auto better = [&scores](UserId x, UserId y) {
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    return x < y;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                    candidates.end(), better);
  candidates.resize(keep);
  return candidates;
}

void rank_side(ScoredRun& out, const RowScorer& scorer, Side side, const MatchSet& targets,
               const MatchSet* exclude, std::size_t k) {
  const std::size_t users = side == Side::A ? targets.side_a_count() : targets.side_b_count();
  const std::size_t others = side == Side::A ? targets.side_b_count() : targets.side_a_count();
  auto& lists = side == Side::A ? out.run.lists_a : out.run.lists_b;
  auto& scores = side == Side::A ? out.scores_a : out.scores_b;
  lists.assign(users, {});
  scores.assign(users, {});
  out.run.k = k;

  std::vector<double> row(others);
  std::vector<UserId> excluded;
  for (std::size_t u = 0; u < users; ++u) {
    const auto uid = static_cast<UserId>(u);
    const auto& own = targets.of(side, uid);
    if (own.empty()) continue;
    scorer(side, uid, row);
    excluded.clear();
    if (exclude) {
      const auto& known = exclude->of(side, uid);
      std::set_difference(known.begin(), known.end(), own.begin(), own.end(),
                          std::back_inserter(excluded));
    }
    lists[u] = top_k_indices(row, excluded, k);
    scores[u].reserve(lists[u].size());
    for (UserId v : lists[u]) scores[u].push_back(row[v]);
  }
}

ScoredRun rank_top_k(const RowScorer& scorer, const MatchSet& targets, const MatchSet* exclude,
                     std::size_t k) {
  ScoredRun out;
  rank_side(out, scorer, Side::A, targets, exclude, k);
  rank_side(out, scorer, Side::B, targets, exclude, k);
  return out;
}

}  // namespace rrs

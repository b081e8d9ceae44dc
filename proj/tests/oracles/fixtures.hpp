#pragma once

// Instance builders shared by unit and acceptance tests.

#include <cstddef>
#include <cstdint>
#include <set>
#include <vector>

#include "rrs/metrics.hpp"
#include "rrs/random.hpp"

namespace rrs::fixture {

struct Instance {
  std::size_t n = 0;
  std::size_t m = 0;
  std::set<Pair> pairs;
  RecommendationRun run;

  MatchSet matches() const {
    const std::vector<Pair> v(pairs.begin(), pairs.end());
    return MatchSet(n, m, v);
  }
};

// The top-1 scenario over users a1, a2 (ids 0, 1) and b1, b2 (ids 0, 1) in
// which every cross pair is a match. Case 1: a1->b1, a2->b2, b1->a2, b2->a1.
// Case 2: both sides recommend (a1, b1) and (a2, b2). Case 3: a1->b1,
// a2->b2, b1->a1, b2->a1.
Instance top1_case(int which_case);

// Uniform random instance: each cross pair matched with probability
// `density`, each list a uniformly random subset of up to K distinct ids.
Instance random_instance(std::size_t n_max, std::size_t m_max, std::size_t k_max, double density, Rng& rng);

// Random instance in which every matched pair is hit by both sides or by
// neither.
Instance both_or_neither_instance(std::size_t n_max, std::size_t m_max, std::size_t k_max, Rng& rng);

// Random instance in which every matched pair is hit by both sides.
Instance all_mutual_instance(std::size_t n_max, std::size_t m_max, std::size_t k_max, Rng& rng);

}  // namespace rrs::fixture

#include "fixtures.hpp"

#include <algorithm>
#include <numeric>

namespace rrs::fixture {

namespace {

std::vector<UserId> random_subset(std::size_t universe, std::size_t size, Rng& rng) {
  std::vector<UserId> ids(universe);
  std::iota(ids.begin(), ids.end(), UserId{0});
  portable_shuffle(ids.begin(), ids.end(), rng);
  ids.resize(std::min(size, universe));
  return ids;
}

Instance empty_instance(std::size_t n_max, std::size_t m_max, std::size_t k_max, Rng& rng) {
  Instance x;
  x.n = 1 + uniform_below(rng, n_max);
  x.m = 1 + uniform_below(rng, m_max);
  x.run.k = 1 + uniform_below(rng, k_max);
  x.run.lists_a.assign(x.n, {});
  x.run.lists_b.assign(x.m, {});
  return x;
}

bool listed(const std::vector<UserId>& l, UserId v) { return std::find(l.begin(), l.end(), v) != l.end(); }

// Fills the remaining list slots with non-matched counterparts.
void pad_with_non_matches(Instance& x, Rng& rng) {
  for (Side side : {Side::A, Side::B}) {
    const std::size_t users = side == Side::A ? x.n : x.m;
    const std::size_t others = side == Side::A ? x.m : x.n;
    for (UserId u = 0; u < users; ++u) {
      auto& list = x.run.list(side, u);
      for (UserId v : random_subset(others, others, rng)) {
        if (list.size() >= x.run.k) break;
        const Pair p = side == Side::A ? Pair{u, v} : Pair{v, u};
        if (x.pairs.count(p) || listed(list, v)) continue;
        if (uniform_unit(rng) < 0.5) list.push_back(v);
      }
      portable_shuffle(list.begin(), list.end(), rng);
    }
  }
}

}  // namespace

Instance top1_case(int which_case) {
  Instance x;
  x.n = 2;
  x.m = 2;
  x.pairs = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  x.run.k = 1;
  switch (which_case) {
    case 1:  // a1->b1, b1->a2, a2->b2, b2->a1
      x.run.lists_a = {{0}, {1}};
      x.run.lists_b = {{1}, {0}};
      break;
    case 2:  // a1<->b1, a2<->b2
      x.run.lists_a = {{0}, {1}};
      x.run.lists_b = {{0}, {1}};
      break;
    default:  // a1<->b1, a2->b2, b2->a1
      x.run.lists_a = {{0}, {1}};
      x.run.lists_b = {{0}, {0}};
      break;
  }
  return x;
}

Instance random_instance(std::size_t n_max, std::size_t m_max, std::size_t k_max, double density, Rng& rng) {
  Instance x = empty_instance(n_max, m_max, k_max, rng);
  for (UserId a = 0; a < x.n; ++a)
    for (UserId b = 0; b < x.m; ++b)
      if (uniform_unit(rng) < density) x.pairs.insert({a, b});
  for (UserId a = 0; a < x.n; ++a) x.run.lists_a[a] = random_subset(x.m, uniform_below(rng, x.run.k + 1), rng);
  for (UserId b = 0; b < x.m; ++b) x.run.lists_b[b] = random_subset(x.n, uniform_below(rng, x.run.k + 1), rng);
  return x;
}

Instance both_or_neither_instance(std::size_t n_max, std::size_t m_max, std::size_t k_max, Rng& rng) {
  Instance x = empty_instance(n_max, m_max, k_max, rng);
  for (UserId a = 0; a < x.n; ++a)
    for (UserId b = 0; b < x.m; ++b)
      if (uniform_unit(rng) < 0.35) x.pairs.insert({a, b});
  for (const auto& p : x.pairs) {
    auto& la = x.run.lists_a[p.a];
    auto& lb = x.run.lists_b[p.b];
    if (la.size() < x.run.k && lb.size() < x.run.k && uniform_unit(rng) < 0.5) {
      la.push_back(p.b);
      lb.push_back(p.a);
    }
  }
  pad_with_non_matches(x, rng);
  return x;
}

Instance all_mutual_instance(std::size_t n_max, std::size_t m_max, std::size_t k_max, Rng& rng) {
  Instance x = empty_instance(n_max, m_max, k_max, rng);
  for (UserId a = 0; a < x.n; ++a)
    for (UserId b = 0; b < x.m; ++b)
      if (uniform_unit(rng) < 0.35 && x.run.lists_a[a].size() < x.run.k && x.run.lists_b[b].size() < x.run.k) {
        x.pairs.insert({a, b});
        x.run.lists_a[a].push_back(b);
        x.run.lists_b[b].push_back(a);
      }
  pad_with_non_matches(x, rng);
  return x;
}

}  // namespace rrs::fixture

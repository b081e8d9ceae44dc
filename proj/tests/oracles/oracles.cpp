#include "oracles.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace rrs::oracle {

namespace {

bool has(const std::vector<UserId>& list, UserId x) {
  for (UserId y : list) {
    if (y == x) return true;
  }
  return false;
}

const std::vector<UserId>& list_or_empty(const std::vector<std::vector<UserId>>& lists, std::size_t u) {
  static const std::vector<UserId> kEmpty;
  return u < lists.size() ? lists[u] : kEmpty;
}

struct Side3 {
  double recall = 0, precision = 0, ndcg = 0;
  std::size_t users = 0;
};

Side3 brute_side(const RecommendationRun& run, std::size_t users, std::size_t others,
                 const std::set<Pair>& matches, bool side_a) {
  double rs = 0, ps = 0, ns = 0;
  std::size_t cnt = 0;
  for (std::size_t u = 0; u < users; ++u) {
    std::vector<UserId> truth;
    for (std::size_t v = 0; v < others; ++v) {
      const Pair p = side_a ? Pair{static_cast<UserId>(u), static_cast<UserId>(v)}
                            : Pair{static_cast<UserId>(v), static_cast<UserId>(u)};
      if (matches.count(p)) truth.push_back(static_cast<UserId>(v));
    }
    if (truth.empty()) continue;
    ++cnt;
    const auto& list = list_or_empty(side_a ? run.lists_a : run.lists_b, u);
    std::size_t tp = 0;
    double dcg = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (has(truth, list[i])) {
        ++tp;
        dcg += 1.0 / std::log2(static_cast<double>(i + 2));
      }
    }
    double idcg = 0;
    for (std::size_t i = 0; i < std::min(truth.size(), run.k); ++i) idcg += 1.0 / std::log2(static_cast<double>(i + 2));
    rs += static_cast<double>(tp) / static_cast<double>(truth.size());
    ps += static_cast<double>(tp) / static_cast<double>(run.k);
    ns += dcg / idcg;
  }
  Side3 out;
  out.users = cnt;
  if (cnt > 0) {
    out.recall = rs / static_cast<double>(cnt);
    out.precision = ps / static_cast<double>(cnt);
    out.ndcg = ns / static_cast<double>(cnt);
  }
  return out;
}

struct GridCounts {
  std::int64_t tp_a = 0, tp_b = 0, both = 0, matches = 0, eval_a = 0, eval_b = 0;
};

GridCounts grid_counts(const RecommendationRun& run, std::size_t n, std::size_t m, const std::set<Pair>& matches) {
  GridCounts c;
  std::vector<bool> ea(n, false), eb(m, false);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      if (!matches.count(Pair{static_cast<UserId>(a), static_cast<UserId>(b)})) continue;
      ++c.matches;
      ea[a] = true;
      eb[b] = true;
      const bool ha = has(list_or_empty(run.lists_a, a), static_cast<UserId>(b));
      const bool hb = has(list_or_empty(run.lists_b, b), static_cast<UserId>(a));
      c.tp_a += ha;
      c.tp_b += hb;
      c.both += ha && hb;
    }
  }
  c.eval_a = std::count(ea.begin(), ea.end(), true);
  c.eval_b = std::count(eb.begin(), eb.end(), true);
  return c;
}

}  // namespace

MetricReport brute_metrics(const RecommendationRun& run, std::size_t n, std::size_t m,
                           const std::set<Pair>& matches) {
  const auto a = brute_side(run, n, m, matches, true);
  const auto b = brute_side(run, m, n, matches, false);
  const auto c = grid_counts(run, n, m, matches);

  MetricReport r;
  r.recall_a = a.recall;
  r.precision_a = a.precision;
  r.ndcg_a = a.ndcg;
  r.recall_b = b.recall;
  r.precision_b = b.precision;
  r.ndcg_b = b.ndcg;
  r.recall_avg = (a.recall + b.recall) / 2.0;
  r.precision_avg = (a.precision + b.precision) / 2.0;
  r.ndcg_avg = (a.ndcg + b.ndcg) / 2.0;
  if (c.matches > 0) {
    const auto covered = static_cast<double>(c.tp_a + c.tp_b - c.both);
    const auto slots = static_cast<double>((c.eval_a + c.eval_b) * static_cast<std::int64_t>(run.k));
    r.crecall = covered / static_cast<double>(c.matches);
    r.cprecision = covered / slots;
    r.srecall = static_cast<double>(c.both) / static_cast<double>(c.matches);
    r.sprecision = static_cast<double>(c.both) / slots;
  }
  const auto na = static_cast<double>(a.users);
  const auto nb = static_cast<double>(b.users);
  r.rndcg = na + nb == 0 ? 0.0 : (na * a.ndcg + nb * b.ndcg) / (na + nb);
  r.true_positive_pairs = static_cast<std::size_t>(c.tp_a + c.tp_b - c.both);

  r.counts.tp_a = static_cast<std::size_t>(c.tp_a);
  r.counts.tp_b = static_cast<std::size_t>(c.tp_b);
  r.counts.tp_both = static_cast<std::size_t>(c.both);
  r.counts.matches = static_cast<std::size_t>(c.matches);
  r.counts.evaluable_a = static_cast<std::size_t>(c.eval_a);
  r.counts.evaluable_b = static_cast<std::size_t>(c.eval_b);
  r.flags.no_matches = c.matches == 0;
  r.flags.side_a_empty = a.users == 0;
  r.flags.side_b_empty = b.users == 0;
  return r;
}

RationalOverall rational_overall(const RecommendationRun& run, std::size_t n, std::size_t m,
                                 const std::set<Pair>& matches) {
  const auto c = grid_counts(run, n, m, matches);
  const std::int64_t slots = (c.eval_a + c.eval_b) * static_cast<std::int64_t>(run.k);
  return {Rational(c.tp_a + c.tp_b - c.both, c.matches), Rational(c.tp_a + c.tp_b - c.both, slots),
          Rational(c.both, c.matches), Rational(c.both, slots)};
}

Rational rational_recall_avg(const RecommendationRun& run, std::size_t n, std::size_t m,
                             const std::set<Pair>& matches) {
  Rational total(0);
  for (bool side_a : {true, false}) {
    const std::size_t users = side_a ? n : m;
    const std::size_t others = side_a ? m : n;
    Rational sum(0);
    std::int64_t cnt = 0;
    for (std::size_t u = 0; u < users; ++u) {
      std::int64_t truth = 0, tp = 0;
      for (std::size_t v = 0; v < others; ++v) {
        const Pair p = side_a ? Pair{static_cast<UserId>(u), static_cast<UserId>(v)}
                              : Pair{static_cast<UserId>(v), static_cast<UserId>(u)};
        if (!matches.count(p)) continue;
        ++truth;
        tp += has(list_or_empty(side_a ? run.lists_a : run.lists_b, u), static_cast<UserId>(v));
      }
      if (truth == 0) continue;
      ++cnt;
      sum += Rational(tp, truth);
    }
    if (cnt > 0) total += sum / cnt;
  }
  return total / 2;
}

std::vector<Interaction> brute_kcore(const InteractionLog& log, std::size_t k) {
  std::vector<Interaction> alive = log.interactions;
  while (true) {
    std::map<UserId, std::size_t> da, db;
    for (const auto& it : alive) {
      ++da[it.a];
      ++db[it.b];
    }
    std::vector<Interaction> next;
    for (const auto& it : alive) {
      if (da[it.a] >= k && db[it.b] >= k) next.push_back(it);
    }
    if (next.size() == alive.size()) return alive;
    alive = std::move(next);
  }
}

Gradients finite_difference(const LatentFactorModel& model,
                            const std::function<double(const LatentFactorModel&)>& loss, double h) {
  Gradients g = Gradients::zeros_like(model);
  LatentFactorModel probe = model;
  auto central = [&](double& param) {
    const double keep = param;
    param = keep + h;
    const double up = loss(probe);
    param = keep - h;
    const double down = loss(probe);
    param = keep;
    return (up - down) / (2.0 * h);
  };
  for (Eigen::Index i = 0; i < probe.emb_a.size(); ++i) g.grad_a.data()[i] = central(probe.emb_a.data()[i]);
  for (Eigen::Index i = 0; i < probe.emb_b.size(); ++i) g.grad_b.data()[i] = central(probe.emb_b.data()[i]);
  for (Eigen::Index i = 0; i < probe.bias_a.size(); ++i) g.grad_bias_a[i] = central(probe.bias_a[i]);
  for (Eigen::Index i = 0; i < probe.bias_b.size(); ++i) g.grad_bias_b[i] = central(probe.bias_b[i]);
  return g;
}

double max_relative_error(const Gradients& x, const Gradients& y, double floor) {
  double worst = 0.0;
  auto scan = [&](const double* p, const double* q, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i) {
      const double den = std::max({std::abs(p[i]), std::abs(q[i]), floor});
      worst = std::max(worst, std::abs(p[i] - q[i]) / den);
    }
  };
  scan(x.grad_a.data(), y.grad_a.data(), x.grad_a.size());
  scan(x.grad_b.data(), y.grad_b.data(), x.grad_b.size());
  scan(x.grad_bias_a.data(), y.grad_bias_a.data(), x.grad_bias_a.size());
  scan(x.grad_bias_b.data(), y.grad_bias_b.data(), x.grad_bias_b.size());
  return worst;
}

double exhaustive_ybar(const LatentFactorModel& model, Side side, UserId user,
                       const std::vector<UserId>& sorted_exclusions, std::size_t top_q) {
  const std::size_t others = side == Side::A ? model.m() : model.n();
  std::vector<double> scores;
  for (std::size_t v = 0; v < others; ++v) {
    if (std::binary_search(sorted_exclusions.begin(), sorted_exclusions.end(), static_cast<UserId>(v))) continue;
    const auto o = static_cast<UserId>(v);
    scores.push_back(side == Side::A ? score(model, user, o) : score(model, o, user));
  }
  std::sort(scores.begin(), scores.end(), std::greater<>());
  const std::size_t q = std::min(top_q, scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < q; ++i) sum += scores[i];
  return sum / static_cast<double>(q);
}

std::vector<UserId> brute_top_k(const std::vector<double>& scores, const std::set<UserId>& excluded,
                                std::size_t k) {
  std::vector<std::pair<double, UserId>> all;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!excluded.count(static_cast<UserId>(i))) all.emplace_back(scores[i], static_cast<UserId>(i));
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  std::vector<UserId> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

double chi_square_uniform_p(const std::vector<std::size_t>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace rrs::oracle

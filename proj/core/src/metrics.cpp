#include "rrs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rrs {

namespace {

bool sorted_contains(const std::vector<UserId>& v, UserId x) {
  return std::binary_search(v.begin(), v.end(), x);
}

bool in_list(const std::vector<UserId>& list, UserId x) {
  return std::find(list.begin(), list.end(), x) != list.end();
}

}  // namespace

void RecommendationRun::validate() const {
  auto check = [this](const std::vector<std::vector<UserId>>& lists, std::size_t other_count,
                      Side side) {
    for (std::size_t u = 0; u < lists.size(); ++u) {
      const auto& l = lists[u];
      const std::string who = std::string(to_string(side)) + "-user " + std::to_string(u);
      if (l.size() > k) throw ValidationError(who + " has a list longer than K");
      std::vector<UserId> sorted(l);
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ValidationError(who + " has duplicate list entries");
      }
      if (!sorted.empty() && sorted.back() >= other_count) {
        throw ValidationError(who + " recommends an out-of-range id");
      }
    }
  };
  check(lists_a, lists_b.size(), Side::A);
  check(lists_b, lists_a.size(), Side::B);
}

MatchSet::MatchSet(std::size_t n, std::size_t m, std::span<const Pair> pairs)
    : pairs_(pairs.begin(), pairs.end()), per_a_(n), per_b_(m) {
  std::sort(pairs_.begin(), pairs_.end());
  pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());
  for (const auto& p : pairs_) {
    if (p.a >= n || p.b >= m) throw ValidationError("matched pair references user out of range");
    per_a_[p.a].push_back(p.b);
    per_b_[p.b].push_back(p.a);
  }
  // per_a_ is sorted by construction; per_b_ is not.
  for (auto& v : per_b_) std::sort(v.begin(), v.end());
}

bool MatchSet::contains(Pair p) const {
  return std::binary_search(pairs_.begin(), pairs_.end(), p);
}

std::size_t MatchSet::evaluable_count(Side s) const noexcept {
  const auto& per = s == Side::A ? per_a_ : per_b_;
  return static_cast<std::size_t>(
      std::count_if(per.begin(), per.end(), [](const auto& v) { return !v.empty(); }));
}

std::size_t hits(std::span<const UserId> list, const std::vector<UserId>& sorted_matches) {
  std::size_t tp = 0;
  for (UserId v : list) tp += sorted_contains(sorted_matches, v) ? 1 : 0;
  return tp;
}

double ndcg_at_k(std::span<const UserId> list, const std::vector<UserId>& sorted_matches,
                 std::size_t k) {
  if (sorted_matches.empty() || k == 0) return 0.0;
  double dcg = 0.0;
  const std::size_t len = std::min(list.size(), k);
  for (std::size_t i = 0; i < len; ++i) {
    if (sorted_contains(sorted_matches, list[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(sorted_matches.size(), k);
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

SideMetrics side_metrics(const RecommendationRun& run, const MatchSet& matches, Side side) {
  const std::size_t users = side == Side::A ? matches.side_a_count() : matches.side_b_count();
  const auto& lists = side == Side::A ? run.lists_a : run.lists_b;
  SideMetrics out;
  double recall_sum = 0.0, precision_sum = 0.0, ndcg_sum = 0.0;
  for (std::size_t u = 0; u < users; ++u) {
    const auto& truth = matches.of(side, static_cast<UserId>(u));
    if (truth.empty()) continue;
    static const std::vector<UserId> kNone;
    const auto& list = u < lists.size() ? lists[u] : kNone;
    const std::size_t tp = hits(list, truth);
    ++out.evaluable_users;
    out.true_positives += tp;
    recall_sum += static_cast<double>(tp) / static_cast<double>(truth.size());
    precision_sum += static_cast<double>(tp) / static_cast<double>(run.k);
    ndcg_sum += ndcg_at_k(list, truth, run.k);
  }
  if (out.evaluable_users == 0) {
    out.empty = true;
    return out;
  }
  const auto cnt = static_cast<double>(out.evaluable_users);
  out.recall = recall_sum / cnt;
  out.precision = precision_sum / cnt;
  out.ndcg = ndcg_sum / cnt;
  return out;
}

CountSummary count_hits(const RecommendationRun& run, const MatchSet& matches) {
  CountSummary c;
  c.matches = matches.size();
  c.evaluable_a = matches.evaluable_count(Side::A);
  c.evaluable_b = matches.evaluable_count(Side::B);
  for (const auto& p : matches.pairs()) {
    const bool in_a = p.a < run.lists_a.size() && in_list(run.lists_a[p.a], p.b);
    const bool in_b = p.b < run.lists_b.size() && in_list(run.lists_b[p.b], p.a);
    c.tp_a += in_a ? 1 : 0;
    c.tp_b += in_b ? 1 : 0;
    c.tp_both += (in_a && in_b) ? 1 : 0;
  }
  return c;
}

namespace {

CoverageMetrics coverage_from(const CountSummary& c, std::size_t k) {
  CoverageMetrics out;
  if (c.matches == 0) {
    out.no_matches = true;
    return out;
  }
  const auto covered = static_cast<double>(c.covered());
  out.crecall = covered / static_cast<double>(c.matches);
  out.cprecision = covered / static_cast<double>((c.evaluable_a + c.evaluable_b) * k);
  return out;
}

StabilityMetrics stability_from(const CountSummary& c, std::size_t k) {
  StabilityMetrics out;
  if (c.matches == 0) {
    out.no_matches = true;
    return out;
  }
  const auto both = static_cast<double>(c.tp_both);
  out.srecall = both / static_cast<double>(c.matches);
  out.sprecision = both / static_cast<double>((c.evaluable_a + c.evaluable_b) * k);
  return out;
}

}  // namespace

CoverageMetrics overall_coverage(const RecommendationRun& run, const MatchSet& matches) {
  return coverage_from(count_hits(run, matches), run.k);
}

StabilityMetrics bilateral_stability(const RecommendationRun& run, const MatchSet& matches) {
  return stability_from(count_hits(run, matches), run.k);
}

double rndcg(const SideMetrics& a, const SideMetrics& b) {
  const auto n = static_cast<double>(a.evaluable_users);
  const auto m = static_cast<double>(b.evaluable_users);
  if (n + m == 0.0) return 0.0;
  return (n * a.ndcg + m * b.ndcg) / (n + m);
}

double rndcg(const RecommendationRun& run, const MatchSet& matches) {
  return rndcg(side_metrics(run, matches, Side::A), side_metrics(run, matches, Side::B));
}

std::size_t true_positive_pairs(const RecommendationRun& run, const MatchSet& matches) {
  return count_hits(run, matches).covered();
}

MetricReport evaluate_run(const RecommendationRun& run, const MatchSet& matches) {
  const auto sa = side_metrics(run, matches, Side::A);
  const auto sb = side_metrics(run, matches, Side::B);
  const auto counts = count_hits(run, matches);
  const auto cov = coverage_from(counts, run.k);
  const auto stab = stability_from(counts, run.k);

  MetricReport r;
  r.recall_a = sa.recall;
  r.precision_a = sa.precision;
  r.ndcg_a = sa.ndcg;
  r.recall_b = sb.recall;
  r.precision_b = sb.precision;
  r.ndcg_b = sb.ndcg;
  r.recall_avg = (sa.recall + sb.recall) / 2.0;
  r.precision_avg = (sa.precision + sb.precision) / 2.0;
  r.ndcg_avg = (sa.ndcg + sb.ndcg) / 2.0;
  r.crecall = cov.crecall;
  r.cprecision = cov.cprecision;
  r.srecall = stab.srecall;
  r.sprecision = stab.sprecision;
  r.rndcg = rndcg(sa, sb);
  r.true_positive_pairs = counts.covered();
  r.counts = counts;
  r.flags = {cov.no_matches, sa.empty, sb.empty};
  return r;
}

const std::vector<std::string>& metric_report_columns() {
  static const std::vector<std::string> cols = {
      "recall_a",   "precision_a", "ndcg_a",     "recall_b",      "precision_b",
      "ndcg_b",     "recall_avg",  "precision_avg", "ndcg_avg",   "crecall",
      "cprecision", "srecall",     "sprecision", "rndcg",         "true_positive_pairs"};
  return cols;
}

namespace {

std::vector<double> metric_values(const MetricReport& r) {
  return {r.recall_a,   r.precision_a, r.ndcg_a,        r.recall_b, r.precision_b,
          r.ndcg_b,     r.recall_avg,  r.precision_avg, r.ndcg_avg, r.crecall,
          r.cprecision, r.srecall,     r.sprecision,    r.rndcg};
}

}  // namespace

std::string to_json(const MetricReport& r, int indent) {
  nlohmann::ordered_json j;
  const auto& cols = metric_report_columns();
  const auto vals = metric_values(r);
  for (std::size_t i = 0; i < vals.size(); ++i) j[cols[i]] = vals[i];
  j["true_positive_pairs"] = r.true_positive_pairs;
  j["matches"] = r.counts.matches;
  j["tp_a"] = r.counts.tp_a;
  j["tp_b"] = r.counts.tp_b;
  j["tp_both"] = r.counts.tp_both;
  j["evaluable_a"] = r.counts.evaluable_a;
  j["evaluable_b"] = r.counts.evaluable_b;
  j["warn_no_matches"] = r.flags.no_matches;
  j["warn_side_a_empty"] = r.flags.side_a_empty;
  j["warn_side_b_empty"] = r.flags.side_b_empty;
  return j.dump(indent);
}

void write_tsv(std::ostream& out, const MetricReport& r) {
  const auto& cols = metric_report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "\t" : "") << cols[i];
  out << '\n';
  std::ostringstream row;
  row << std::setprecision(17);
  for (double v : metric_values(r)) row << v << '\t';
  row << r.true_positive_pairs << '\n';
  out << row.str();
}

}  // namespace rrs

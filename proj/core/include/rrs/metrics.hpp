#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rrs/types.hpp"

namespace rrs {

// Top-K lists for every user on both sides. Users without a list hold an
// empty vector.
struct RecommendationRun {
  std::size_t k = 0;
  std::vector<std::vector<UserId>> lists_a;  // per A-user, B-side ids
  std::vector<std::vector<UserId>> lists_b;  // per B-user, A-side ids

  const std::vector<UserId>& list(Side s, UserId u) const {
    return s == Side::A ? lists_a.at(u) : lists_b.at(u);
  }
  std::vector<UserId>& list(Side s, UserId u) { return s == Side::A ? lists_a.at(u) : lists_b.at(u); }

  // Throws ValidationError on oversize lists, duplicates or bad ids.
  void validate() const;

  friend bool operator==(const RecommendationRun&, const RecommendationRun&) = default;
};

// Ground-truth matched pairs with per-user projections.
class MatchSet {
 public:
  MatchSet() = default;
  MatchSet(std::size_t n, std::size_t m, std::span<const Pair> pairs);

  std::size_t side_a_count() const noexcept { return per_a_.size(); }
  std::size_t side_b_count() const noexcept { return per_b_.size(); }
  std::size_t size() const noexcept { return pairs_.size(); }

  const std::vector<Pair>& pairs() const noexcept { return pairs_; }
  // Sorted counterparts of user u on side s.
  const std::vector<UserId>& of(Side s, UserId u) const {
    return s == Side::A ? per_a_.at(u) : per_b_.at(u);
  }
  bool contains(Pair p) const;

  // Users with at least one match on side s.
  std::size_t evaluable_count(Side s) const noexcept;

 private:
  std::vector<Pair> pairs_;  // sorted, distinct
  std::vector<std::vector<UserId>> per_a_;
  std::vector<std::vector<UserId>> per_b_;
};

struct SideMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double ndcg = 0.0;
  std::size_t evaluable_users = 0;
  std::size_t true_positives = 0;  // TP summed over the side
  bool empty = false;              // no evaluable users; values forced to 0
};

struct CountSummary {
  std::size_t tp_a = 0;
  std::size_t tp_b = 0;
  std::size_t tp_both = 0;  // matched pairs present in both users' lists
  std::size_t matches = 0;  // M
  std::size_t evaluable_a = 0;
  std::size_t evaluable_b = 0;

  std::size_t covered() const noexcept { return tp_a + tp_b - tp_both; }

  friend bool operator==(const CountSummary&, const CountSummary&) = default;
};

struct CoverageMetrics {
  double crecall = 0.0;
  double cprecision = 0.0;
  bool no_matches = false;
};

struct StabilityMetrics {
  double srecall = 0.0;
  double sprecision = 0.0;
  bool no_matches = false;
};

struct MetricFlags {
  bool no_matches = false;
  bool side_a_empty = false;
  bool side_b_empty = false;

  friend bool operator==(const MetricFlags&, const MetricFlags&) = default;
};

struct MetricReport {
  double recall_a = 0, precision_a = 0, ndcg_a = 0;
  double recall_b = 0, precision_b = 0, ndcg_b = 0;
  double recall_avg = 0, precision_avg = 0, ndcg_avg = 0;
  double crecall = 0, cprecision = 0;
  double srecall = 0, sprecision = 0;
  double rndcg = 0;
  std::size_t true_positive_pairs = 0;

  CountSummary counts;
  MetricFlags flags;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

// Per-user ranking terms, shared with the streaming form.
std::size_t hits(std::span<const UserId> list, const std::vector<UserId>& sorted_matches);
double ndcg_at_k(std::span<const UserId> list, const std::vector<UserId>& sorted_matches,
                 std::size_t k);

SideMetrics side_metrics(const RecommendationRun& run, const MatchSet& matches, Side side);
CountSummary count_hits(const RecommendationRun& run, const MatchSet& matches);
CoverageMetrics overall_coverage(const RecommendationRun& run, const MatchSet& matches);
StabilityMetrics bilateral_stability(const RecommendationRun& run, const MatchSet& matches);

// (n * NDCG_A + m * NDCG_B) / (n + m) over evaluable users; 0 if both sides
// are empty.
double rndcg(const SideMetrics& a, const SideMetrics& b);
double rndcg(const RecommendationRun& run, const MatchSet& matches);

std::size_t true_positive_pairs(const RecommendationRun& run, const MatchSet& matches);

MetricReport evaluate_run(const RecommendationRun& run, const MatchSet& matches);

// Flat JSON object / one-row TSV. The TSV column order is fixed and given by
// metric_report_columns().
const std::vector<std::string>& metric_report_columns();
std::string to_json(const MetricReport& report, int indent = 2);
void write_tsv(std::ostream& out, const MetricReport& report);

}  // namespace rrs

#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <vector>

#include "rrs/types.hpp"

namespace rrs {

// The four coverage/stability scalars.
struct OverallScalars {
  double crecall = 0.0;
  double cprecision = 0.0;
  double srecall = 0.0;
  double sprecision = 0.0;

  friend bool operator==(const OverallScalars&, const OverallScalars&) = default;
};

// Inputs of one incremental step.
struct RecurrenceStep {
  std::size_t p_size = 0;  // |P| before the step
  std::size_t t = 0;       // lists processed before the step
  std::size_t k = 0;
  std::size_t tp = 0;  // hits in the new list
  std::size_t m = 0;   // matches of the new user
  std::size_t rm = 0;  // matches of the new user already in P
};

// The iterative update, taken literally:
//   CRecall'    = (CRecall * |P| + TP - RM) / (|P| + M - RM)
//   CPrecision' = (CPrecision * t * K + TP - RM) / ((t + 1) * K)
//   SRecall'    = (SRecall * |P| + RM) / (|P| + M - RM)
//   SPrecision' = (SPrecision * t * K + RM) / ((t + 1) * K)
// Throws DomainError on a zero denominator.
OverallScalars recurrence_update(const OverallScalars& prev, const RecurrenceStep& step);

// Incremental coverage/stability over per-user lists arriving one at a time.
//
// The exact sets are authoritative. The recurrence mirrors treat every match
// already in P as a redundant hit, so they only agree with the exact values
// when every matched pair ends up hit from both sides.
class StreamingMetricsState {
 public:
  explicit StreamingMetricsState(std::size_t k);

  // Throws UsageError if (side, user) was already processed, has no matches,
  // or the list is longer than K. `user_matches` are the user's counterparts on the other
  // side; `list` the user's recommendations.
  void process_user(Side side, UserId user, std::span<const UserId> list,
                    std::span<const UserId> user_matches);

  OverallScalars exact() const;
  const OverallScalars& mirror() const noexcept { return mirror_; }

  std::size_t k() const noexcept { return k_; }
  std::size_t processed() const noexcept { return t_; }
  std::size_t positives() const noexcept { return p_.size(); }
  std::size_t covered() const noexcept { return covered_.size(); }
  std::size_t mutual() const noexcept { return mutual_.size(); }

  friend bool operator==(const StreamingMetricsState&, const StreamingMetricsState&) = default;

 private:
  std::size_t k_;
  std::size_t t_ = 0;
  std::set<Pair> p_;
  std::set<Pair> hit_from_a_;
  std::set<Pair> hit_from_b_;
  std::set<Pair> covered_;
  std::set<Pair> mutual_;
  std::set<UserId> done_a_;
  std::set<UserId> done_b_;
  OverallScalars mirror_;
};

StreamingMetricsState streaming_init(std::size_t k);

}  // namespace rrs

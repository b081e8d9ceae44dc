#include "rrs/streaming.hpp"

#include <algorithm>
#include <string>

namespace rrs {

OverallScalars recurrence_update(const OverallScalars& prev, const RecurrenceStep& s) {
  const double p = static_cast<double>(s.p_size);
  const double tk = static_cast<double>(s.t) * static_cast<double>(s.k);
  const double tp = static_cast<double>(s.tp);
  const double rm = static_cast<double>(s.rm);
  const double recall_den = p + static_cast<double>(s.m) - rm;
  const double precision_den = static_cast<double>(s.t + 1) * static_cast<double>(s.k);
  if (recall_den == 0.0) throw DomainError("recurrence: |P| + M - RM is zero");
  if (precision_den == 0.0) throw DomainError("recurrence: (t + 1) K is zero");

  OverallScalars next;
  next.crecall = (prev.crecall * p + tp - rm) / recall_den;
  next.cprecision = (prev.cprecision * tk + tp - rm) / precision_den;
  next.srecall = (prev.srecall * p + rm) / recall_den;
  next.sprecision = (prev.sprecision * tk + rm) / precision_den;
  return next;
}

StreamingMetricsState::StreamingMetricsState(std::size_t k) : k_(k) {
  if (k == 0) throw ConfigError("streaming metrics need K >= 1");
}

StreamingMetricsState streaming_init(std::size_t k) { return StreamingMetricsState(k); }

void StreamingMetricsState::process_user(Side side, UserId user, std::span<const UserId> list,
                                         std::span<const UserId> user_matches) {
  auto& done = side == Side::A ? done_a_ : done_b_;
  if (done.contains(user)) {
    throw UsageError("user " + std::string(to_string(side)) + ":" + std::to_string(user) +
                     " was already processed");
  }
  if (list.size() > k_) throw UsageError("list longer than K");
  if (user_matches.empty()) {
    throw UsageError("user " + std::string(to_string(side)) + ":" + std::to_string(user) +
                     " has no matches and is not evaluable");
  }

  auto pair_of = [side, user](UserId other) {
    return side == Side::A ? Pair{user, other} : Pair{other, user};
  };

  std::vector<UserId> truth(user_matches.begin(), user_matches.end());
  std::sort(truth.begin(), truth.end());
  truth.erase(std::unique(truth.begin(), truth.end()), truth.end());

  RecurrenceStep step;
  step.p_size = p_.size();
  step.t = t_;
  step.k = k_;
  step.m = truth.size();
  for (UserId o : truth) step.rm += p_.contains(pair_of(o)) ? 1 : 0;
  for (UserId o : list) step.tp += std::binary_search(truth.begin(), truth.end(), o) ? 1 : 0;

  for (UserId o : truth) p_.insert(pair_of(o));
  auto& mine = side == Side::A ? hit_from_a_ : hit_from_b_;
  const auto& theirs = side == Side::A ? hit_from_b_ : hit_from_a_;
  for (UserId o : list) {
    if (!std::binary_search(truth.begin(), truth.end(), o)) continue;
    const Pair p = pair_of(o);
    mine.insert(p);
    covered_.insert(p);
    if (theirs.contains(p)) mutual_.insert(p);
  }

  mirror_ = recurrence_update(mirror_, step);
  done.insert(user);
  ++t_;
}

OverallScalars StreamingMetricsState::exact() const {
  OverallScalars out;
  if (!p_.empty()) {
    out.crecall = static_cast<double>(covered_.size()) / static_cast<double>(p_.size());
    out.srecall = static_cast<double>(mutual_.size()) / static_cast<double>(p_.size());
  }
  if (t_ > 0) {
    const double tk = static_cast<double>(t_) * static_cast<double>(k_);
    out.cprecision = static_cast<double>(covered_.size()) / tk;
    out.sprecision = static_cast<double>(mutual_.size()) / tk;
  }
  return out;
}

}  // namespace rrs

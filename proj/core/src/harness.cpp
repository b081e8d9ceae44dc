#include "rrs/harness.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rrs {

namespace {

bool listed(const std::vector<UserId>& list, UserId x) {
  return std::find(list.begin(), list.end(), x) != list.end();
}

std::size_t rank_of(const std::vector<UserId>& list, UserId x) {
  return static_cast<std::size_t>(std::find(list.begin(), list.end(), x) - list.begin());
}

template <typename T>
T pick(const std::vector<T>& v, Rng& rng) {
  return v[uniform_below(rng, v.size())];
}

}  // namespace

void EvalConfig::validate() const {
  if (k < 1) throw ConfigError("K must be >= 1");
  if (ybar_sample_size < 1) throw ConfigError("ybar_sample_size must be >= 1");
  if (ybar_top_q < 1) throw ConfigError("ybar_top_q must be >= 1");
}

EvalContext make_eval_context(const DatasetSplit& split, const EvalConfig& config) {
  config.validate();
  const std::size_t n = split.test.side_a_count;
  const std::size_t m = split.test.side_b_count;
  auto known = split.train.matched_pairs();
  const auto val = split.validation.matched_pairs();
  known.insert(known.end(), val.begin(), val.end());
  return EvalContext{MatchSet(n, m, split.matched_pairs_test), MatchSet(n, m, known),
                     config.candidate_policy};
}

Evaluation full_rank_evaluate(const RowScorer& scorer, const EvalContext& context, std::size_t k) {
  Evaluation out;
  out.ranked = rank_top_k(scorer, context.targets, context.exclude(), k);
  out.report = evaluate_run(out.ranked.run, context.targets);
  return out;
}

Evaluation full_rank_evaluate(const RowScorer& scorer, const DatasetSplit& split,
                              const EvalConfig& config) {
  return full_rank_evaluate(scorer, make_eval_context(split, config), config.k);
}

AdjustResult adjust_uni(const RecommendationRun& run, const MatchSet& matches, Rng& rng) {
  AdjustResult out{run, {}};
  auto& r = out.run;
  auto hit_a = [&r](UserId a, UserId b) { return a < r.lists_a.size() && listed(r.lists_a[a], b); };
  auto hit_b = [&r](UserId a, UserId b) { return b < r.lists_b.size() && listed(r.lists_b[b], a); };

  std::vector<UserId> eligible;
  for (const auto& p : matches.pairs()) {
    if (!(hit_a(p.a, p.b) && hit_b(p.a, p.b))) continue;
    const std::size_t rank_a = rank_of(r.lists_a[p.a], p.b);
    const std::size_t rank_b = rank_of(r.lists_b[p.b], p.a);
    eligible.clear();
    if (rank_a > rank_b) {
      for (UserId b2 : matches.of(Side::A, p.a)) {
        if (b2 != p.b && !hit_a(p.a, b2) && !hit_b(p.a, b2)) eligible.push_back(b2);
      }
      if (eligible.empty()) {
        ++out.report.skipped;
        continue;
      }
      r.lists_a[p.a][rank_a] = pick(eligible, rng);
    } else {
      for (UserId a2 : matches.of(Side::B, p.b)) {
        if (a2 != p.a && !hit_a(a2, p.b) && !hit_b(a2, p.b)) eligible.push_back(a2);
      }
      if (eligible.empty()) {
        ++out.report.skipped;
        continue;
      }
      r.lists_b[p.b][rank_b] = pick(eligible, rng);
    }
    ++out.report.replaced;
  }
  return out;
}

AdjustResult adjust_rep(const RecommendationRun& run, const MatchSet& matches, Rng& rng) {
  AdjustResult out{run, {}};
  auto& r = out.run;
  auto hit_a = [&r](UserId a, UserId b) { return a < r.lists_a.size() && listed(r.lists_a[a], b); };
  auto hit_b = [&r](UserId a, UserId b) { return b < r.lists_b.size() && listed(r.lists_b[b], a); };

  std::vector<UserId> eligible;
  for (std::size_t a = 0; a < r.lists_a.size() && a < matches.side_a_count(); ++a) {
    const auto ua = static_cast<UserId>(a);
    const auto& truth = matches.of(Side::A, ua);
    for (std::size_t rank = 0; rank < r.lists_a[a].size(); ++rank) {
      const UserId b = r.lists_a[a][rank];
      if (!std::binary_search(truth.begin(), truth.end(), b) || hit_b(ua, b)) continue;
      eligible.clear();
      for (UserId b2 : truth) {
        if (hit_b(ua, b2) && !hit_a(ua, b2)) eligible.push_back(b2);
      }
      if (eligible.empty()) {
        ++out.report.skipped;
        continue;
      }
      r.lists_a[a][rank] = pick(eligible, rng);
      ++out.report.replaced;
    }
  }
  for (std::size_t b = 0; b < r.lists_b.size() && b < matches.side_b_count(); ++b) {
    const auto ub = static_cast<UserId>(b);
    const auto& truth = matches.of(Side::B, ub);
    for (std::size_t rank = 0; rank < r.lists_b[b].size(); ++rank) {
      const UserId a = r.lists_b[b][rank];
      if (!std::binary_search(truth.begin(), truth.end(), a) || hit_a(a, ub)) continue;
      eligible.clear();
      for (UserId a2 : truth) {
        if (hit_a(a2, ub) && !hit_b(a2, ub)) eligible.push_back(a2);
      }
      if (eligible.empty()) {
        ++out.report.skipped;
        continue;
      }
      r.lists_b[b][rank] = pick(eligible, rng);
      ++out.report.replaced;
    }
  }
  return out;
}

std::size_t RankHistogram::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

RankHistogram redundancy_rank_histogram(const RecommendationRun& run, const MatchSet& matches) {
  RankHistogram h;
  h.counts.assign(run.k, 0);
  for (const auto& p : matches.pairs()) {
    if (p.a >= run.lists_a.size() || p.b >= run.lists_b.size()) continue;
    const auto& la = run.lists_a[p.a];
    const auto& lb = run.lists_b[p.b];
    const std::size_t ra = rank_of(la, p.b);
    const std::size_t rb = rank_of(lb, p.a);
    if (ra == la.size() || rb == lb.size()) continue;
    ++h.counts.at(ra);
    ++h.counts.at(rb);
  }
  return h;
}

std::string to_json(const RankHistogram& histogram) { return nlohmann::json(histogram.counts).dump(); }

DualTraining train_dual(const LatentFactorModel& init, const InteractionLog& train_log,
                        const MatchSet& validation, const TrainConfig& config, bool per_side) {
  if (!per_side) {
    auto ra = train(init, train_log, validation, config);
    auto rb = train(init, train_log, validation, config);
    DualModels models{ra.best, rb.best};
    return {std::move(models), std::move(ra), std::move(rb)};
  }

  const auto sets = derive_treatment_sets(train_log);
  std::vector<Pair> pos_a(sets.d11), pos_b(sets.d11);
  pos_a.insert(pos_a.end(), sets.d10.begin(), sets.d10.end());
  pos_b.insert(pos_b.end(), sets.d01.begin(), sets.d01.end());
  std::sort(pos_a.begin(), pos_a.end());
  std::sort(pos_b.begin(), pos_b.end());

  const MatchSet known(train_log.side_a_count, train_log.side_b_count, train_log.matched_pairs());
  const std::size_t k = config.eval_k;

  auto side_recall = [&validation, &known, k](const LatentFactorModel& m, Side side) {
    ScoredRun ranked;
    rank_side(ranked, row_scorer(m), side, validation, &known, k);
    if (side == Side::A) {
      ranked.run.lists_b.assign(validation.side_b_count(), {});
    } else {
      ranked.run.lists_a.assign(validation.side_a_count(), {});
    }
    return side_metrics(ranked.run, validation, side).recall;
  };

  TrainConfig cfg_a = config;
  cfg_a.negative_sides = NegativeSides::A;
  TrainConfig cfg_b = config;
  cfg_b.negative_sides = NegativeSides::B;
  auto ra = train_on_pairs(init, pos_a, known,
                           [&](const LatentFactorModel& m) { return side_recall(m, Side::A); }, cfg_a);
  auto rb = train_on_pairs(init, pos_b, known,
                           [&](const LatentFactorModel& m) { return side_recall(m, Side::B); }, cfg_b);
  DualModels models{ra.best, rb.best};
  return {std::move(models), std::move(ra), std::move(rb)};
}

RowScorer dual_row_scorer(const DualModels& models) {
  return [&models](Side side, UserId user, std::span<double> out) {
    const auto& model = side == Side::A ? models.side_a : models.side_b;
    model.logit_row(side, user, out);
    for (double& v : out) v = sigmoid(v);
  };
}

MetricReport run_baseline_dual(const LatentFactorModel& init, const DatasetSplit& split,
                               const TrainConfig& train_config, const EvalConfig& eval_config,
                               bool per_side) {
  const MatchSet validation(split.validation.side_a_count, split.validation.side_b_count,
                            split.validation.matched_pairs());
  const auto dual = train_dual(init, split.train, validation, train_config, per_side);
  return full_rank_evaluate(dual_row_scorer(dual.models), split, eval_config).report;
}

void write_run_dump(std::ostream& out, const ScoredRun& run, Side side) {
  const auto& lists = side == Side::A ? run.run.lists_a : run.run.lists_b;
  const auto& scores = side == Side::A ? run.scores_a : run.scores_b;
  std::ostringstream buf;
  buf << std::setprecision(17);
  for (std::size_t u = 0; u < lists.size(); ++u) {
    for (std::size_t i = 0; i < lists[u].size(); ++i) {
      const double s = u < scores.size() && i < scores[u].size() ? scores[u][i] : 0.0;
      buf << u << '\t' << (i + 1) << '\t' << lists[u][i] << '\t' << s << '\n';
    }
  }
  out << buf.str();
}

void read_run_dump(std::istream& in, ScoredRun& run, Side side) {
  auto& lists = side == Side::A ? run.run.lists_a : run.run.lists_b;
  auto& scores = side == Side::A ? run.scores_a : run.scores_b;
  scores.resize(lists.size());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::size_t user = 0, rank = 0;
    UserId other = 0;
    double s = 0.0;
    if (!(fields >> user >> rank >> other >> s)) throw ParseError("malformed run dump row", line_no);
    if (user >= lists.size()) throw ParseError("user id outside the run", line_no);
    if (rank != lists[user].size() + 1) throw ParseError("ranks must be consecutive from 1", line_no);
    lists[user].push_back(other);
    scores[user].push_back(s);
  }
}

}  // namespace rrs

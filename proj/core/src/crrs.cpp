#include "rrs/crrs.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rrs {

std::string_view to_string(Treatment t) noexcept {
  switch (t) {
    case Treatment::T10: return "10";
    case Treatment::T01: return "01";
    case Treatment::T11: return "11";
    case Treatment::T00: return "00";
  }
  return "?";
}

LatentFactorModel& TreatmentModels::model(Treatment t) {
  switch (t) {
    case Treatment::T10: return f10;
    case Treatment::T01: return f01;
    case Treatment::T11: return f11;
    case Treatment::T00: break;
  }
  throw UsageError("no model is trained for treatment 00");
}

const LatentFactorModel& TreatmentModels::model(Treatment t) const {
  return const_cast<TreatmentModels*>(this)->model(t);
}

TreatmentModels init_from_pretrained(const LatentFactorModel& backbone) {
  return TreatmentModels{backbone, backbone, backbone, backbone};
}

PotentialOutcomes potential_outcomes(const TreatmentModels& models, UserId a, UserId b) {
  return {score(models.f10, a, b), score(models.f11, a, b), score(models.f01, a, b)};
}

PairScores simple_scores(const PotentialOutcomes& y, const ScoreWeights& w) {
  return {w.direct * y.y10 + w.mutual * y.y11, w.direct * y.y01 + w.mutual * y.y11};
}

double strategy_value(Treatment t, const PotentialOutcomes& y, double ybar_a, double ybar_b) {
  switch (t) {
    case Treatment::T10: return y.y10 + ybar_b;
    case Treatment::T01: return y.y01 + ybar_a;
    case Treatment::T11: return y.y11;
    case Treatment::T00: return ybar_a + ybar_b;
  }
  return 0.0;
}

Treatment best_strategy(const PotentialOutcomes& y, double ybar_a, double ybar_b) {
  // Preference order doubles as the tie-break: single-sided strategies first.
  constexpr Treatment order[] = {Treatment::T10, Treatment::T01, Treatment::T11, Treatment::T00};
  Treatment best = order[0];
  double best_value = strategy_value(best, y, ybar_a, ybar_b);
  for (std::size_t i = 1; i < 4; ++i) {
    const double v = strategy_value(order[i], y, ybar_a, ybar_b);
    if (v > best_value) {
      best = order[i];
      best_value = v;
    }
  }
  return best;
}

PairScores rerank_scores(const PotentialOutcomes& y, double ybar_a, double ybar_b) {
  switch (best_strategy(y, ybar_a, ybar_b)) {
    case Treatment::T11: return {y.y11, y.y11};
    case Treatment::T10: return {y.y10, 0.0};
    case Treatment::T01: return {0.0, y.y01};
    case Treatment::T00: break;
  }
  return {0.0, 0.0};
}

VacantSlotEstimate vacant_slot_value(const LatentFactorModel& pretrained, Side side, UserId user,
                                     std::size_t sample_size, Rng& rng,
                                     std::span<const UserId> sorted_exclusions, std::size_t top_q) {
  if (sample_size < 1) throw ConfigError("vacant-slot sample size must be >= 1");
  if (top_q < 1) throw ConfigError("vacant-slot top_q must be >= 1");
  const std::size_t others = side == Side::A ? pretrained.m() : pretrained.n();

  std::vector<UserId> pool;
  pool.reserve(others);
  for (std::size_t c = 0; c < others; ++c) {
    if (!std::binary_search(sorted_exclusions.begin(), sorted_exclusions.end(), c)) {
      pool.push_back(static_cast<UserId>(c));
    }
  }
  if (pool.empty()) throw SamplingError("vacant slot: no counterpart outside the exclusions");

  // Partial Fisher-Yates: the first `take` entries are a uniform sample
  // without replacement.
  const std::size_t take = std::min(sample_size, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + uniform_below(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<double> scores(take);
  for (std::size_t i = 0; i < take; ++i) {
    scores[i] = side == Side::A ? score(pretrained, user, pool[i]) : score(pretrained, pool[i], user);
  }
  const std::size_t q = std::min(top_q, take);
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(q), scores.end(),
                    std::greater<>());
  const double sum = std::accumulate(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(q), 0.0);
  return {side, user, sum / static_cast<double>(q), take};
}

VacantSlotCache::VacantSlotCache(const LatentFactorModel& pretrained, const MatchSet& exclusions,
                                 std::size_t sample_size, std::uint64_t seed, std::size_t top_q)
    : pretrained_(pretrained),
      exclusions_(exclusions),
      sample_size_(sample_size),
      seed_(seed),
      top_q_(top_q) {}

double VacantSlotCache::get(Side side, UserId user) {
  const auto key = std::make_pair(side, user);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  Rng rng(mix64(seed_ ^ mix64((static_cast<std::uint64_t>(side) << 32) | user)));
  static const std::vector<UserId> kNone;
  const std::size_t users = side == Side::A ? exclusions_.side_a_count() : exclusions_.side_b_count();
  const auto& excl = user < users ? exclusions_.of(side, user) : kNone;
  const auto est = vacant_slot_value(pretrained_, side, user, sample_size_, rng, excl, top_q_);
  cache_.emplace(key, est.ybar);
  return est.ybar;
}

namespace {

std::vector<BprTriple> pretrain_terms(std::span<const Pair> batch, const MatchSet& known, Rng& rng) {
  std::vector<BprTriple> out;
  out.reserve(batch.size() * 2);
  for (const auto& p : batch) append_triples(out, p, known, NegativeSides::Both, 1, rng);
  return out;
}

}  // namespace

BatchPlan plan_batch(std::span<const Pair> batch, const TreatmentSets& sets, const MatchSet& known,
                     Rng& rng) {
  BatchPlan plan;
  for (const auto& p : batch) {
    std::optional<UserId> neg_b, neg_a;
    try {
      neg_b = sample_negative(known.of(Side::A, p.a), known.side_b_count(), rng);
    } catch (const SamplingError&) {
    }
    try {
      neg_a = sample_negative(known.of(Side::B, p.b), known.side_a_count(), rng);
    } catch (const SamplingError&) {
    }
    const bool in01 = std::binary_search(sets.d01.begin(), sets.d01.end(), p);
    const bool in10 = std::binary_search(sets.d10.begin(), sets.d10.end(), p);
    const bool in11 = std::binary_search(sets.d11.begin(), sets.d11.end(), p);
    if (in01 && neg_b) plan.t01.counterfactual.push_back({p.a, p.b, *neg_b, NegativeSide::A});
    if (in10 && neg_a) plan.t10.counterfactual.push_back({p.a, p.b, *neg_a, NegativeSide::B});
    if (in11) {
      if (neg_b) plan.t11.counterfactual.push_back({p.a, p.b, *neg_b, NegativeSide::A});
      if (neg_a) plan.t11.counterfactual.push_back({p.a, p.b, *neg_a, NegativeSide::B});
      if (neg_b) plan.t01.counterfactual.push_back({p.a, p.b, *neg_b, NegativeSide::A});
      if (neg_a) plan.t10.counterfactual.push_back({p.a, p.b, *neg_a, NegativeSide::B});
    }
  }
  plan.t10.pretrain = pretrain_terms(batch, known, rng);
  plan.t11.pretrain = pretrain_terms(batch, known, rng);
  plan.t01.pretrain = pretrain_terms(batch, known, rng);
  return plan;
}

RowScorer simple_row_scorer(const TreatmentModels& models, const ScoreWeights& w) {
  return [&models, w](Side side, UserId user, std::span<double> out) {
    std::vector<double> mutual(out.size());
    models.f11.logit_row(side, user, mutual);
    models.model(side == Side::A ? Treatment::T10 : Treatment::T01).logit_row(side, user, out);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = w.direct * sigmoid(out[i]) + w.mutual * sigmoid(mutual[i]);
    }
  };
}

RowScorer rerank_row_scorer(const TreatmentModels& models, VacantSlotCache& cache) {
  return [&models, &cache](Side side, UserId user, std::span<double> out) {
    std::vector<double> l10(out.size()), l11(out.size()), l01(out.size());
    models.f10.logit_row(side, user, l10);
    models.f11.logit_row(side, user, l11);
    models.f01.logit_row(side, user, l01);
    const double own = cache.get(side, user);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const PotentialOutcomes y{sigmoid(l10[i]), sigmoid(l11[i]), sigmoid(l01[i])};
      const double other = cache.get(opposite(side), static_cast<UserId>(i));
      const double ybar_a = side == Side::A ? own : other;
      const double ybar_b = side == Side::A ? other : own;
      const auto s = rerank_scores(y, ybar_a, ybar_b);
      out[i] = side == Side::A ? s.s_a : s.s_b;
    }
  };
}

FinetuneResult counterfactual_finetune(const TreatmentModels& init, const TreatmentSets& sets,
                                       const InteractionLog& train, const MatchSet& validation,
                                       const FinetuneConfig& config) {
  config.train.validate();
  FinetuneResult result;
  result.models = init;
  if (sets.d10.empty()) result.warnings.push_back("treatment set d10 is empty; f10 sees only the pretraining loss");
  if (sets.d11.empty()) result.warnings.push_back("treatment set d11 is empty; f11 sees only the pretraining loss");
  if (sets.d01.empty()) result.warnings.push_back("treatment set d01 is empty; f01 sees only the pretraining loss");

  std::vector<Pair> pairs;
  pairs.insert(pairs.end(), sets.d11.begin(), sets.d11.end());
  pairs.insert(pairs.end(), sets.d10.begin(), sets.d10.end());
  pairs.insert(pairs.end(), sets.d01.begin(), sets.d01.end());
  std::sort(pairs.begin(), pairs.end());
  if (pairs.empty()) throw ValidationError("finetuning needs at least one matched training pair");

  const MatchSet known(train.side_a_count, train.side_b_count, train.matched_pairs());
  TreatmentModels models = init;
  const AdamParams adam{config.train.learning_rate};
  auto opt10 = make_optimizer(models.f10, adam);
  auto opt11 = make_optimizer(models.f11, adam);
  auto opt01 = make_optimizer(models.f01, adam);
  Gradients grads = Gradients::zeros_like(models.f10);

  auto step = [&](LatentFactorModel& model, OptimizerState& opt, const BatchTerms& terms) {
    grads.set_zero();
    double loss = accumulate_bpr(model, terms.counterfactual, config.train.l2_weight, grads);
    loss += accumulate_bpr(model, terms.pretrain, config.train.l2_weight, grads);
    adam_step(model, opt, grads);
    return loss;
  };

  auto validate = [&](const TreatmentModels& m) {
    return average_recall(simple_row_scorer(m, config.weights), validation, &known,
                          config.train.eval_k);
  };

  Rng rng(config.train.seed);
  double best = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.train.max_epochs; ++epoch) {
    portable_shuffle(pairs.begin(), pairs.end(), rng);
    FinetuneRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < pairs.size(); start += config.train.batch_size) {
      const std::size_t stop = std::min(pairs.size(), start + config.train.batch_size);
      const std::span<const Pair> batch(pairs.data() + start, stop - start);
      const auto plan = plan_batch(batch, sets, known, rng);
      rec.loss10 += step(models.f10, opt10, plan.t10);
      rec.loss11 += step(models.f11, opt11, plan.t11);
      rec.loss01 += step(models.f01, opt01, plan.t01);
      ++batches;
    }
    rec.loss10 /= static_cast<double>(batches);
    rec.loss11 /= static_cast<double>(batches);
    rec.loss01 /= static_cast<double>(batches);
    rec.validation = validate(models);
    result.history.push_back(rec);
    if (rec.validation > best) {
      best = rec.validation;
      result.best_epoch = epoch;
      result.models = models;
      since_best = 0;
    } else if (++since_best >= config.train.patience) {
      break;
    }
  }
  return result;
}

void save_treatment_models(const std::filesystem::path& path, const TreatmentModels& models,
                           const std::string& stage) {
  nlohmann::ordered_json j;
  j["format"] = "rrs.treatment_models";
  j["version"] = 1;
  j["stage"] = stage;
  j["pretrained"] = nlohmann::ordered_json::parse(checkpoint_json(models.pretrained));
  j["f10"] = nlohmann::ordered_json::parse(checkpoint_json(models.f10));
  j["f11"] = nlohmann::ordered_json::parse(checkpoint_json(models.f11));
  j["f01"] = nlohmann::ordered_json::parse(checkpoint_json(models.f01));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
}

TreatmentModels load_treatment_models(const std::filesystem::path& path, std::string* stage) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("treatment checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "rrs.treatment_models" || j.value("version", 0) != 1) {
    throw ValidationError("treatment checkpoint: wrong format tag or version");
  }
  if (stage) *stage = j.value("stage", "");
  TreatmentModels models{model_from_checkpoint_json(j.at("f10").dump()),
                         model_from_checkpoint_json(j.at("f11").dump()),
                         model_from_checkpoint_json(j.at("f01").dump()),
                         model_from_checkpoint_json(j.at("pretrained").dump())};
  const auto& p = models.pretrained;
  for (const auto* f : {&models.f10, &models.f11, &models.f01}) {
    if (f->n() != p.n() || f->m() != p.m() || f->dim() != p.dim()) {
      throw ValidationError("treatment checkpoint: models disagree on shape");
    }
  }
  return models;
}

}  // namespace rrs

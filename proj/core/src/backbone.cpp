#include "rrs/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rrs {

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double neg_log_sigmoid(double x) noexcept {
  // softplus(-x)
  if (x > 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double LatentFactorModel::logit(UserId a, UserId b) const {
  double v = emb_a.row(a).dot(emb_b.row(b));
  if (use_bias) v += bias_a[a] + bias_b[b];
  return v;
}

void LatentFactorModel::logit_row(Side side, UserId user, std::span<double> out) const {
  if (side == Side::A) {
    Eigen::Map<Vector> dst(out.data(), static_cast<Eigen::Index>(out.size()));
    dst.noalias() = emb_b * emb_a.row(user).transpose();
    if (use_bias) dst.array() += bias_b.array() + bias_a[user];
  } else {
    Eigen::Map<Vector> dst(out.data(), static_cast<Eigen::Index>(out.size()));
    dst.noalias() = emb_a * emb_b.row(user).transpose();
    if (use_bias) dst.array() += bias_a.array() + bias_b[user];
  }
}

bool LatentFactorModel::all_finite() const {
  return emb_a.allFinite() && emb_b.allFinite() && bias_a.allFinite() && bias_b.allFinite();
}

LatentFactorModel init_model(std::size_t n, std::size_t m, std::size_t d, std::uint64_t seed,
                             bool use_bias) {
  if (n < 1 || m < 1 || d < 1) throw ConfigError("model shape needs n, m, d >= 1");
  Rng rng(seed);
  const double scale = 0.1 / std::sqrt(static_cast<double>(d));
  LatentFactorModel model;
  model.emb_a.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  model.emb_b.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < model.emb_a.size(); ++i) model.emb_a.data()[i] = scale * standard_normal(rng);
  for (Eigen::Index i = 0; i < model.emb_b.size(); ++i) model.emb_b.data()[i] = scale * standard_normal(rng);
  model.use_bias = use_bias;
  if (use_bias) {
    model.bias_a = Vector::Zero(static_cast<Eigen::Index>(n));
    model.bias_b = Vector::Zero(static_cast<Eigen::Index>(m));
  }
  return model;
}

double score(const LatentFactorModel& model, UserId a, UserId b) {
  if (a >= model.n() || b >= model.m()) {
    throw IndexError("score: pair (" + std::to_string(a) + ", " + std::to_string(b) +
                     ") outside model shape");
  }
  return sigmoid(model.logit(a, b));
}

RowScorer row_scorer(const LatentFactorModel& model) {
  return [&model](Side side, UserId user, std::span<double> out) {
    model.logit_row(side, user, out);
  };
}

RowScorer probability_row_scorer(const LatentFactorModel& model) {
  return [&model](Side side, UserId user, std::span<double> out) {
    model.logit_row(side, user, out);
    for (double& v : out) v = sigmoid(v);
  };
}

Gradients Gradients::zeros_like(const LatentFactorModel& model) {
  Gradients g;
  g.grad_a = Matrix::Zero(model.emb_a.rows(), model.emb_a.cols());
  g.grad_b = Matrix::Zero(model.emb_b.rows(), model.emb_b.cols());
  g.grad_bias_a = Vector::Zero(model.bias_a.size());
  g.grad_bias_b = Vector::Zero(model.bias_b.size());
  return g;
}

void Gradients::set_zero() {
  grad_a.setZero();
  grad_b.setZero();
  grad_bias_a.setZero();
  grad_bias_b.setZero();
}

double accumulate_bpr(const LatentFactorModel& model, std::span<const BprTriple> triples,
                      double l2_weight, Gradients& grads, double scale) {
  if (triples.empty()) return 0.0;
  const double inv = scale / static_cast<double>(triples.size());
  double loss = 0.0;
  double reg = 0.0;
  for (const auto& t : triples) {
    const auto ea = model.emb_a.row(t.a);
    const auto eb = model.emb_b.row(t.b);
    double x;
    if (t.side == NegativeSide::A) {
      const auto en = model.emb_b.row(t.neg);
      x = ea.dot(eb - en);
      if (model.use_bias) x += model.bias_b[t.b] - model.bias_b[t.neg];
      // d(-log sigmoid(x))/dx = -sigmoid(-x)
      const double g = -sigmoid(-x) * inv;
      grads.grad_a.row(t.a).noalias() += g * (eb - en);
      grads.grad_b.row(t.b).noalias() += g * ea;
      grads.grad_b.row(t.neg).noalias() -= g * ea;
      if (model.use_bias) {
        grads.grad_bias_b[t.b] += g;
        grads.grad_bias_b[t.neg] -= g;
      }
      reg += ea.squaredNorm() + eb.squaredNorm() + en.squaredNorm();
      const double r = 2.0 * l2_weight * inv;
      grads.grad_a.row(t.a).noalias() += r * ea;
      grads.grad_b.row(t.b).noalias() += r * eb;
      grads.grad_b.row(t.neg).noalias() += r * en;
    } else {
      const auto en = model.emb_a.row(t.neg);
      x = eb.dot(ea - en);
      if (model.use_bias) x += model.bias_a[t.a] - model.bias_a[t.neg];
      const double g = -sigmoid(-x) * inv;
      grads.grad_b.row(t.b).noalias() += g * (ea - en);
      grads.grad_a.row(t.a).noalias() += g * eb;
      grads.grad_a.row(t.neg).noalias() -= g * eb;
      if (model.use_bias) {
        grads.grad_bias_a[t.a] += g;
        grads.grad_bias_a[t.neg] -= g;
      }
      reg += ea.squaredNorm() + eb.squaredNorm() + en.squaredNorm();
      const double r = 2.0 * l2_weight * inv;
      grads.grad_a.row(t.a).noalias() += r * ea;
      grads.grad_b.row(t.b).noalias() += r * eb;
      grads.grad_a.row(t.neg).noalias() += r * en;
    }
    loss += neg_log_sigmoid(x);
  }
  return inv * (loss + l2_weight * reg);
}

LossAndGrad bpr_loss_and_grad(const LatentFactorModel& model, std::span<const BprTriple> triples,
                              double l2_weight) {
  LossAndGrad out;
  out.grad = Gradients::zeros_like(model);
  out.loss = accumulate_bpr(model, triples, l2_weight, out.grad);
  return out;
}

UserId sample_negative(std::span<const UserId> sorted_exclusions, std::size_t opposite_count,
                       Rng& rng) {
  const auto excluded_in_range = static_cast<std::size_t>(
      std::lower_bound(sorted_exclusions.begin(), sorted_exclusions.end(),
                       static_cast<UserId>(std::min<std::size_t>(opposite_count, UINT32_MAX))) -
      sorted_exclusions.begin());
  if (excluded_in_range >= opposite_count) throw SamplingError("no negative candidate available");
  const std::size_t available = opposite_count - excluded_in_range;

  if (available * 4 >= opposite_count) {
    for (;;) {
      const auto c = static_cast<UserId>(uniform_below(rng, opposite_count));
      if (!std::binary_search(sorted_exclusions.begin(), sorted_exclusions.end(), c)) return c;
    }
  }
  // Dense exclusions: pick the r-th free id directly.
  auto r = uniform_below(rng, available);
  std::size_t ex = 0;
  for (std::size_t c = 0; c < opposite_count; ++c) {
    while (ex < sorted_exclusions.size() && sorted_exclusions[ex] < c) ++ex;
    if (ex < sorted_exclusions.size() && sorted_exclusions[ex] == c) continue;
    if (r-- == 0) return static_cast<UserId>(c);
  }
  throw SamplingError("no negative candidate available");
}

OptimizerState make_optimizer(const LatentFactorModel& model, const AdamParams& params) {
  if (!(params.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  OptimizerState s;
  s.first = Gradients::zeros_like(model);
  s.second = Gradients::zeros_like(model);
  s.params = params;
  return s;
}

namespace {

template <typename Param, typename Grad, typename Moment>
void adam_update(Param& p, const Grad& g, Moment& m1, Moment& m2, const AdamParams& ap,
                 double c1, double c2) {
  m1.array() = ap.beta1 * m1.array() + (1.0 - ap.beta1) * g.array();
  m2.array() = ap.beta2 * m2.array() + (1.0 - ap.beta2) * g.array().square();
  p.array() -= ap.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + ap.epsilon);
}

}  // namespace

void adam_step(LatentFactorModel& model, OptimizerState& s, const Gradients& g) {
  ++s.step;
  const double c1 = 1.0 - std::pow(s.params.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.params.beta2, static_cast<double>(s.step));
  adam_update(model.emb_a, g.grad_a, s.first.grad_a, s.second.grad_a, s.params, c1, c2);
  adam_update(model.emb_b, g.grad_b, s.first.grad_b, s.second.grad_b, s.params, c1, c2);
  if (model.use_bias) {
    adam_update(model.bias_a, g.grad_bias_a, s.first.grad_bias_a, s.second.grad_bias_a, s.params,
                c1, c2);
    adam_update(model.bias_b, g.grad_bias_b, s.first.grad_bias_b, s.second.grad_bias_b, s.params,
                c1, c2);
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (eval_k < 1) throw ConfigError("eval_k must be >= 1");
  if (negatives_per_positive < 1) throw ConfigError("negatives_per_positive must be >= 1");
  if (l2_weight < 0.0) throw ConfigError("l2_weight must be >= 0");
}

double average_recall(const RowScorer& scorer, const MatchSet& targets, const MatchSet* exclude,
                      std::size_t k) {
  const auto ranked = rank_top_k(scorer, targets, exclude, k);
  const auto a = side_metrics(ranked.run, targets, Side::A);
  const auto b = side_metrics(ranked.run, targets, Side::B);
  return (a.recall + b.recall) / 2.0;
}

void append_triples(std::vector<BprTriple>& out, Pair pos, const MatchSet& known,
                    NegativeSides sides, std::size_t repeats, Rng& rng) {
  for (std::size_t r = 0; r < repeats; ++r) {
    if (sides != NegativeSides::B) {
      try {
        const auto neg = sample_negative(known.of(Side::A, pos.a), known.side_b_count(), rng);
        out.push_back({pos.a, pos.b, neg, NegativeSide::A});
      } catch (const SamplingError&) {
      }
    }
    if (sides != NegativeSides::A) {
      try {
        const auto neg = sample_negative(known.of(Side::B, pos.b), known.side_a_count(), rng);
        out.push_back({pos.a, pos.b, neg, NegativeSide::B});
      } catch (const SamplingError&) {
      }
    }
  }
}

TrainResult train_on_pairs(LatentFactorModel model, std::span<const Pair> positives,
                           const MatchSet& known, const Validator& validator,
                           const TrainConfig& config) {
  config.validate();
  if (positives.empty()) throw ValidationError("training needs at least one positive pair");

  Rng rng(config.seed);
  std::vector<Pair> order(positives.begin(), positives.end());
  auto optimizer = make_optimizer(model, AdamParams{config.learning_rate});
  Gradients grads = Gradients::zeros_like(model);

  TrainResult result;
  result.best = model;
  result.best_validation = -1.0;
  std::size_t since_best = 0;
  std::vector<BprTriple> batch;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    portable_shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) {
        append_triples(batch, order[i], known, config.negative_sides,
                       config.negatives_per_positive, rng);
      }
      if (batch.empty()) continue;
      grads.set_zero();
      const double loss = accumulate_bpr(model, batch, config.l2_weight, grads);
      adam_step(model, optimizer, grads);
      loss_sum += loss * static_cast<double>(batch.size());
      loss_count += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    rec.validation = validator(model);
    result.history.push_back(rec);

    if (rec.validation > result.best_validation) {
      result.best_validation = rec.validation;
      result.best_epoch = epoch;
      result.best = model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.optimizer = std::move(optimizer);
  return result;
}

TrainResult train(LatentFactorModel model, const InteractionLog& train_log,
                  const MatchSet& validation, const TrainConfig& config) {
  const auto positives = train_log.matched_pairs();
  const MatchSet known(train_log.side_a_count, train_log.side_b_count, positives);
  const std::size_t k = config.eval_k;
  Validator validator = [&validation, &known, k](const LatentFactorModel& m) {
    return average_recall(row_scorer(m), validation, &known, k);
  };
  return train_on_pairs(std::move(model), positives, known, validator, config);
}

namespace {

template <typename Dense>
nlohmann::json to_array(const Dense& x) {
  return nlohmann::json(std::vector<double>(x.data(), x.data() + x.size()));
}

void fill(Matrix& mat, const nlohmann::json& arr, std::size_t rows, std::size_t cols,
          const char* name) {
  const auto values = arr.get<std::vector<double>>();
  if (values.size() != rows * cols) throw ValidationError(std::string("checkpoint: bad size for ") + name);
  mat.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::copy(values.begin(), values.end(), mat.data());
}

}  // namespace

std::string checkpoint_json(const LatentFactorModel& model, const CheckpointMeta& meta) {
  nlohmann::ordered_json j;
  j["format"] = "rrs.latent_factor";
  j["version"] = 1;
  j["n"] = model.n();
  j["m"] = model.m();
  j["d"] = model.dim();
  j["use_bias"] = model.use_bias;
  j["emb_a"] = to_array(model.emb_a);
  j["emb_b"] = to_array(model.emb_b);
  j["bias_a"] = to_array(model.bias_a);
  j["bias_b"] = to_array(model.bias_b);
  j["optimizer"] = {{"name", "adam"},
                    {"step", meta.optimizer_step},
                    {"learning_rate", meta.adam.learning_rate},
                    {"beta1", meta.adam.beta1},
                    {"beta2", meta.adam.beta2},
                    {"epsilon", meta.adam.epsilon}};
  return j.dump();
}

LatentFactorModel model_from_checkpoint_json(const std::string& text, CheckpointMeta* meta) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "rrs.latent_factor") throw ValidationError("checkpoint: wrong format tag");
  if (j.value("version", 0) != 1) throw ValidationError("checkpoint: unsupported version");
  const auto n = j.at("n").get<std::size_t>();
  const auto m = j.at("m").get<std::size_t>();
  const auto d = j.at("d").get<std::size_t>();
  LatentFactorModel model;
  fill(model.emb_a, j.at("emb_a"), n, d, "emb_a");
  fill(model.emb_b, j.at("emb_b"), m, d, "emb_b");
  model.use_bias = j.at("use_bias").get<bool>();
  const auto ba = j.at("bias_a").get<std::vector<double>>();
  const auto bb = j.at("bias_b").get<std::vector<double>>();
  if (model.use_bias && (ba.size() != n || bb.size() != m)) {
    throw ValidationError("checkpoint: bias size mismatch");
  }
  model.bias_a = Eigen::Map<const Vector>(ba.data(), static_cast<Eigen::Index>(ba.size()));
  model.bias_b = Eigen::Map<const Vector>(bb.data(), static_cast<Eigen::Index>(bb.size()));
  if (meta) {
    const auto& o = j.at("optimizer");
    meta->optimizer_step = o.at("step").get<std::uint64_t>();
    meta->adam.learning_rate = o.at("learning_rate").get<double>();
    meta->adam.beta1 = o.at("beta1").get<double>();
    meta->adam.beta2 = o.at("beta2").get<double>();
    meta->adam.epsilon = o.at("epsilon").get<double>();
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const LatentFactorModel& model,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << checkpoint_json(model, meta) << '\n';
}

LatentFactorModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_checkpoint_json(ss.str(), meta);
}

}  // namespace rrs

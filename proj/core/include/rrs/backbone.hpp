#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rrs/dataset.hpp"
#include "rrs/metrics.hpp"
#include "rrs/random.hpp"
#include "rrs/ranking.hpp"
#include "rrs/types.hpp"

namespace rrs {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

double sigmoid(double x) noexcept;
// -log(sigmoid(x)), stable for large |x|.
double neg_log_sigmoid(double x) noexcept;

// Matrix-factorization scorer: one embedding row per user on each side,
// optional per-user biases.
struct LatentFactorModel {
  Matrix emb_a;  // n x d
  Matrix emb_b;  // m x d
  Vector bias_a;  // size n when use_bias, else empty
  Vector bias_b;
  bool use_bias = false;

  std::size_t n() const noexcept { return static_cast<std::size_t>(emb_a.rows()); }
  std::size_t m() const noexcept { return static_cast<std::size_t>(emb_b.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(emb_a.cols()); }

  // Unsquashed score; BPR differences are taken on this.
  double logit(UserId a, UserId b) const;

  // Fills `out` (size m for side A, n for side B) with logits of every
  // counterpart. The logistic squash is monotone so rankings use logits.
  void logit_row(Side side, UserId user, std::span<double> out) const;

  bool all_finite() const;

  friend bool operator==(const LatentFactorModel& x, const LatentFactorModel& y) {
    return x.use_bias == y.use_bias && x.emb_a == y.emb_a && x.emb_b == y.emb_b &&
           x.bias_a == y.bias_a && x.bias_b == y.bias_b;
  }
};

// Entries ~ N(0, (0.1 / sqrt(d))^2), biases start at zero.
LatentFactorModel init_model(std::size_t n, std::size_t m, std::size_t d, std::uint64_t seed,
                             bool use_bias = false);

// sigmoid(logit); throws IndexError on out-of-range ids.
double score(const LatentFactorModel& model, UserId a, UserId b);

// Logit rows (fast path for validation) and squashed rows (reported scores).
RowScorer row_scorer(const LatentFactorModel& model);
RowScorer probability_row_scorer(const LatentFactorModel& model);

// Which id a BPR triple replaces with the negative.
//   A: negative counterpart for the A-side user, i.e. (a, b) vs (a, neg)
//   B: negative counterpart for the B-side user, i.e. (a, b) vs (neg, b)
enum class NegativeSide : std::uint8_t { A, B };

struct BprTriple {
  UserId a = 0;
  UserId b = 0;
  UserId neg = 0;
  NegativeSide side = NegativeSide::A;
};

struct Gradients {
  Matrix grad_a;
  Matrix grad_b;
  Vector grad_bias_a;
  Vector grad_bias_b;

  static Gradients zeros_like(const LatentFactorModel& model);
  void set_zero();
};

// Adds `scale` times the gradient of
//   mean_i[-log sigmoid(x_pos_i - x_neg_i)] + l2 * mean_i[|e_a|^2 + |e_b|^2 + |e_neg|^2]
// into `grads` and returns the scaled loss. Empty `triples` contribute 0.
double accumulate_bpr(const LatentFactorModel& model, std::span<const BprTriple> triples,
                      double l2_weight, Gradients& grads, double scale = 1.0);

struct LossAndGrad {
  double loss = 0.0;
  Gradients grad;
};

LossAndGrad bpr_loss_and_grad(const LatentFactorModel& model, std::span<const BprTriple> triples,
                              double l2_weight);

// Uniform over opposite-side ids in [0, opposite_count) that are not in
// `sorted_exclusions`. Throws SamplingError if nothing is left.
UserId sample_negative(std::span<const UserId> sorted_exclusions, std::size_t opposite_count,
                       Rng& rng);

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  Gradients first;   // first-moment accumulators
  Gradients second;  // second-moment accumulators
  std::uint64_t step = 0;
  AdamParams params;
};

OptimizerState make_optimizer(const LatentFactorModel& model, const AdamParams& params);
void adam_step(LatentFactorModel& model, OptimizerState& state, const Gradients& grads);

enum class NegativeSides : std::uint8_t { A, B, Both };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 300;
  std::size_t patience = 30;
  std::uint64_t seed = 0;
  double l2_weight = 1e-6;
  std::size_t eval_k = 50;
  std::size_t negatives_per_positive = 1;
  NegativeSides negative_sides = NegativeSides::Both;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double validation = 0.0;
};

struct TrainResult {
  LatentFactorModel best;
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
  OptimizerState optimizer;
};

using Validator = std::function<double(const LatentFactorModel&)>;

// Mean of side-A and side-B Recall@k on `targets`, ranking candidates that
// are not in `exclude`.
double average_recall(const RowScorer& scorer, const MatchSet& targets, const MatchSet* exclude,
                      std::size_t k);

// Builds BPR triples for one positive pair. Sides whose candidate pool is
// exhausted are skipped.
void append_triples(std::vector<BprTriple>& out, Pair positive, const MatchSet& known,
                    NegativeSides sides, std::size_t repeats, Rng& rng);

// Mini-batch BPR with Adam and early stopping on `validator` (higher is
// better). Returns the best-epoch snapshot.
TrainResult train_on_pairs(LatentFactorModel model, std::span<const Pair> positives,
                           const MatchSet& known_positives, const Validator& validator,
                           const TrainConfig& config);

// Trains on the distinct matched pairs of `train`; validation metric is the
// average side Recall@eval_k on `validation`, train positives excluded from
// candidates.
TrainResult train(LatentFactorModel model, const InteractionLog& train, const MatchSet& validation,
                  const TrainConfig& config);

// JSON checkpoint: {"format": "rrs.latent_factor", "version": 1, n, m, d,
// use_bias, emb_a, emb_b (row-major flat), bias_a, bias_b, optimizer}.
struct CheckpointMeta {
  std::uint64_t optimizer_step = 0;
  AdamParams adam;
};

std::string checkpoint_json(const LatentFactorModel& model, const CheckpointMeta& meta = {});
LatentFactorModel model_from_checkpoint_json(const std::string& text,
                                             CheckpointMeta* meta = nullptr);
void save_checkpoint(const std::filesystem::path& path, const LatentFactorModel& model,
                     const CheckpointMeta& meta = {});
LatentFactorModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace rrs

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rrs/types.hpp"

namespace rrs {

// One directed interaction between an A-side and a B-side user.
struct Interaction {
  UserId a = 0;
  UserId b = 0;
  bool a_to_b = true;  // direction: true means a -> b, false means b -> a
  bool matched = false;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct InteractionLog {
  std::size_t side_a_count = 0;
  std::size_t side_b_count = 0;
  std::vector<Interaction> interactions;

  bool empty() const noexcept { return interactions.empty(); }
  std::size_t count(Side s) const noexcept { return s == Side::A ? side_a_count : side_b_count; }

  // Distinct matched pairs, sorted.
  std::vector<Pair> matched_pairs() const;

  // Throws ValidationError if an id is out of range or a pair carries
  // conflicting match labels.
  void validate() const;

  friend bool operator==(const InteractionLog&, const InteractionLog&) = default;
};

enum class InteractionFormat { tsv };

// Reads `<a>\t<b>\t<direction>\t<match>` lines. Blank lines are skipped.
InteractionLog load_interactions(const std::filesystem::path& path,
                                 InteractionFormat format = InteractionFormat::tsv);
InteractionLog parse_interactions(std::istream& in);

void write_interactions(std::ostream& out, const InteractionLog& log);
void save_interactions(const std::filesystem::path& path, const InteractionLog& log);

struct KCoreResult {
  InteractionLog log;
  // new id -> original id, per side
  std::vector<UserId> original_a;
  std::vector<UserId> original_b;
  bool empty = false;
};

// Repeatedly drops users with fewer than k interactions (counted as records,
// either direction) until a fixed point, then re-indexes survivors densely in
// ascending original-id order.
KCoreResult k_core_filter(const InteractionLog& log, std::size_t k);

using SplitRatios = std::array<double, 3>;

struct DatasetSplit {
  InteractionLog train;
  InteractionLog validation;
  InteractionLog test;
  std::vector<Pair> matched_pairs_test;  // sorted, distinct
};

// Seeded shuffle of the interaction records followed by an ordered cut.
// Partition sizes are round(N * r_train), round(N * r_valid), remainder.
DatasetSplit split(const InteractionLog& log, const SplitRatios& ratios, std::uint64_t seed);

// Matched training pairs grouped by which directions were observed.
struct TreatmentSets {
  std::vector<Pair> d11;  // both directions
  std::vector<Pair> d10;  // a -> b only
  std::vector<Pair> d01;  // b -> a only

  std::size_t size() const noexcept { return d11.size() + d10.size() + d01.size(); }
};

TreatmentSets derive_treatment_sets(const InteractionLog& train);

struct SyntheticParams {
  std::size_t n = 200;
  std::size_t m = 200;
  std::size_t dim = 8;
  double density = 0.05;
  std::uint64_t seed = 0;
  // Multiplier on the latent dot product inside the logistic link.
  double sharpness = 4.0;
};

// Planted latent-factor market. Each user gets a N(0, 1/sqrt(dim)) vector;
// a->b and b->a are independent Bernoulli draws with probability
// sigmoid(sharpness * <x_a, y_b> + offset), where the offset is calibrated so
// the mean probability over all pairs equals `density`. A pair is matched
// exactly when both directions are emitted.
InteractionLog generate_synthetic(const SyntheticParams& params);

// On-disk form of a prepared dataset: train.tsv, validation.tsv, test.tsv
// and metadata.json in one directory.
struct SplitManifest {
  DatasetSplit split;
  SplitRatios ratios{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
  std::size_t kcore_k = 0;  // 0 when no filtering was applied
  std::vector<UserId> original_a;  // new id -> original id
  std::vector<UserId> original_b;
  std::optional<SyntheticParams> synthetic;
  std::uint64_t root_seed = 0;
  std::vector<std::pair<std::string, std::uint64_t>> derived_seeds;
};

void save_split_manifest(const std::filesystem::path& dir, const SplitManifest& manifest);
// Throws ValidationError when files are missing or disagree with metadata.
SplitManifest load_split_manifest(const std::filesystem::path& dir);

}  // namespace rrs

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

#include "rrs/backbone.hpp"
#include "rrs/crrs.hpp"
#include "rrs/dataset.hpp"
#include "rrs/harness.hpp"
#include "rrs/random.hpp"

namespace rrs::cli {

using KeyValues = std::map<std::string, std::string>;

// `key = value` per line; `#` starts a comment; blank lines ignored.
// Throws ConfigError naming the line on malformed input.
KeyValues parse_key_values(std::istream& in);
KeyValues load_key_values(const std::filesystem::path& path);

struct ExperimentConfig {
  bool synthetic = false;
  std::string data_path;
  SyntheticParams synthetic_params;
  std::size_t kcore_k = 5;
  SplitRatios ratios{0.8, 0.1, 0.1};
  std::uint64_t root_seed = 0;
  std::size_t dim = 128;
  TrainConfig pretrain;
  FinetuneConfig finetune;
  EvalConfig eval;
  std::string out;

  std::uint64_t seed(std::string_view component) const { return derive_seed(root_seed, component); }

  void validate() const;
};

// Layers `overrides` over `file` over defaults. Unknown keys and
// unparseable values throw ConfigError.
ExperimentConfig resolve_config(const KeyValues& file, const KeyValues& overrides);

// Canonical key=value dump of every setting except `out`, sorted by key.
std::string to_key_values(const ExperimentConfig& config);

// The seeds every component draws from, in a fixed order.
std::vector<std::pair<std::string, std::uint64_t>> derived_seeds(const ExperimentConfig& config);

}  // namespace rrs::cli

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "rrs/cli/config.hpp"

namespace rrs::cli {

// Parses arguments, dispatches the subcommand and maps failures to exit
// codes: 0 success, 1 runtime error, 2 usage or configuration error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// load (or synthesize) -> k-core -> split, as `prepare` does it.
SplitManifest prepare_dataset(const ExperimentConfig& config);

// Run-directory layout.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path backbone() const { return root / "checkpoints" / "backbone.json"; }
  std::filesystem::path treatment_models() const { return root / "checkpoints" / "treatment_models.json"; }
  std::filesystem::path history() const { return root / "history.json"; }
  std::filesystem::path config() const { return root / "config.cfg"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path eval(const std::string& mode) const { return root / "eval" / mode; }
  std::filesystem::path stream() const { return root / "stream"; }
  std::filesystem::path adjust(const std::string& mode) const { return root / "adjust" / mode; }
};

}  // namespace rrs::cli

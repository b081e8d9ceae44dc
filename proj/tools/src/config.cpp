#include "rrs/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <vector>

namespace rrs::cli {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

SplitRatios to_ratios(const std::string& key, const std::string& v) {
  SplitRatios r{};
  std::stringstream ss(v);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == 3) throw ConfigError(key + ": expected three comma-separated ratios");
    r[i++] = to_double(key, trim(part));
  }
  if (i != 3) throw ConfigError(key + ": expected three comma-separated ratios");
  return r;
}

std::string fmt(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

CandidatePolicy to_policy(const std::string& key, const std::string& v) {
  if (v == "all") return CandidatePolicy::All;
  if (v == "exclude-train-val-positives") return CandidatePolicy::ExcludeTrainValPositives;
  throw ConfigError(key + ": expected all or exclude-train-val-positives, got '" + v + "'");
}

std::string policy_name(CandidatePolicy p) {
  return p == CandidatePolicy::All ? "all" : "exclude-train-val-positives";
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field size_field(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<T>(to_u64(k, v));
          },
          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

void add_train_fields(std::map<std::string, Field>& f, const std::string& prefix,
                      TrainConfig& (*pick)(ExperimentConfig&),
                      const TrainConfig& (*cpick)(const ExperimentConfig&)) {
  f[prefix + "learning_rate"] = {
      [pick](ExperimentConfig& c, const std::string& k, const std::string& v) { pick(c).learning_rate = to_double(k, v); },
      [cpick](const ExperimentConfig& c) { return fmt(cpick(c).learning_rate); }};
  f[prefix + "l2_weight"] = {
      [pick](ExperimentConfig& c, const std::string& k, const std::string& v) { pick(c).l2_weight = to_double(k, v); },
      [cpick](const ExperimentConfig& c) { return fmt(cpick(c).l2_weight); }};
  const std::pair<const char*, std::size_t TrainConfig::*> sizes[] = {
      {"batch_size", &TrainConfig::batch_size},
      {"max_epochs", &TrainConfig::max_epochs},
      {"patience", &TrainConfig::patience},
      {"eval_k", &TrainConfig::eval_k},
      {"negatives_per_positive", &TrainConfig::negatives_per_positive}};
  for (const auto& [name, member] : sizes) {
    f[prefix + name] = {[pick, member](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          pick(c).*member = static_cast<std::size_t>(to_u64(k, v));
                        },
                        [cpick, member](const ExperimentConfig& c) { return std::to_string(cpick(c).*member); }};
  }
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["data.synthetic"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.synthetic = to_bool(k, v); },
                           [](const ExperimentConfig& c) { return std::string(c.synthetic ? "true" : "false"); }};
    f["data.path"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.data_path = v; },
                      [](const ExperimentConfig& c) { return c.data_path; }};
    f["out"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.out = v; },
                [](const ExperimentConfig& c) { return c.out; }};
    f["seed"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.root_seed = to_u64(k, v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.root_seed); }};
    f["synthetic.n"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.synthetic_params.n = to_u64(k, v); },
                        [](const ExperimentConfig& c) { return std::to_string(c.synthetic_params.n); }};
    f["synthetic.m"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.synthetic_params.m = to_u64(k, v); },
                        [](const ExperimentConfig& c) { return std::to_string(c.synthetic_params.m); }};
    f["synthetic.dim"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.synthetic_params.dim = to_u64(k, v); },
                          [](const ExperimentConfig& c) { return std::to_string(c.synthetic_params.dim); }};
    f["synthetic.density"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.synthetic_params.density = to_double(k, v); },
                              [](const ExperimentConfig& c) { return fmt(c.synthetic_params.density); }};
    f["synthetic.sharpness"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.synthetic_params.sharpness = to_double(k, v); },
                                [](const ExperimentConfig& c) { return fmt(c.synthetic_params.sharpness); }};
    f["kcore.k"] = size_field(&ExperimentConfig::kcore_k);
    f["split.ratios"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.ratios = to_ratios(k, v); },
                         [](const ExperimentConfig& c) {
                           return fmt(c.ratios[0]) + "," + fmt(c.ratios[1]) + "," + fmt(c.ratios[2]);
                         }};
    f["model.dim"] = size_field(&ExperimentConfig::dim);
    add_train_fields(
        f, "pretrain.", [](ExperimentConfig& c) -> TrainConfig& { return c.pretrain; },
        [](const ExperimentConfig& c) -> const TrainConfig& { return c.pretrain; });
    add_train_fields(
        f, "finetune.", [](ExperimentConfig& c) -> TrainConfig& { return c.finetune.train; },
        [](const ExperimentConfig& c) -> const TrainConfig& { return c.finetune.train; });
    f["finetune.weight_direct"] = {
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.finetune.weights.direct = to_double(k, v); },
        [](const ExperimentConfig& c) { return fmt(c.finetune.weights.direct); }};
    f["finetune.weight_mutual"] = {
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.finetune.weights.mutual = to_double(k, v); },
        [](const ExperimentConfig& c) { return fmt(c.finetune.weights.mutual); }};
    f["eval.k"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.k = to_u64(k, v); },
                   [](const ExperimentConfig& c) { return std::to_string(c.eval.k); }};
    f["eval.candidate_policy"] = {
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.candidate_policy = to_policy(k, v); },
        [](const ExperimentConfig& c) { return policy_name(c.eval.candidate_policy); }};
    f["eval.ybar_sample_size"] = {
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.ybar_sample_size = to_u64(k, v); },
        [](const ExperimentConfig& c) { return std::to_string(c.eval.ybar_sample_size); }};
    f["eval.ybar_top_q"] = {
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval.ybar_top_q = to_u64(k, v); },
        [](const ExperimentConfig& c) { return std::to_string(c.eval.ybar_top_q); }};
    return f;
  }();
  return table;
}

void apply(ExperimentConfig& c, const KeyValues& kv) {
  const auto& table = fields();
  for (const auto& [key, value] : kv) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(c, key, value);
  }
}

}  // namespace

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_key_values(in);
}

void ExperimentConfig::validate() const {
  if (!synthetic && data_path.empty()) throw ConfigError("either data.synthetic or data.path is required");
  if (synthetic) {
    if (synthetic_params.n < 10 || synthetic_params.m < 10) throw ConfigError("synthetic n and m must be >= 10");
    if (!(synthetic_params.density > 0.0 && synthetic_params.density < 1.0)) {
      throw ConfigError("synthetic.density must lie in (0, 1)");
    }
    if (synthetic_params.dim < 1) throw ConfigError("synthetic.dim must be >= 1");
  }
  if (dim < 1) throw ConfigError("model.dim must be >= 1");
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split.ratios must be positive");
  }
  pretrain.validate();
  finetune.train.validate();
  eval.validate();
}

ExperimentConfig resolve_config(const KeyValues& file, const KeyValues& overrides) {
  ExperimentConfig c;
  apply(c, file);
  apply(c, overrides);
  return c;
}

std::string to_key_values(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) {
    if (key != "out") out += key + " = " + field.get(config) + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::uint64_t>> derived_seeds(const ExperimentConfig& config) {
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (const char* name : {"synthetic", "split", "backbone.init", "backbone.train", "finetune", "ybar", "adjust"}) {
    out.emplace_back(name, config.seed(name));
  }
  return out;
}

}  // namespace rrs::cli

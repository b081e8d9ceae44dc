#include "rrs/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "rrs/random.hpp"

namespace rrs {

namespace {

bool parse_field(std::string_view text, std::uint64_t& out) {
  if (text.empty()) return false;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

// Splits on tabs; runs of spaces are tolerated as separators as well.
std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == '\t' || line[i] == ' ')) ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != '\t' && line[j] != ' ') ++j;
    fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<Pair> InteractionLog::matched_pairs() const {
  std::vector<Pair> pairs;
  for (const auto& it : interactions) {
    if (it.matched) pairs.push_back({it.a, it.b});
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

void InteractionLog::validate() const {
  std::unordered_map<Pair, bool, PairHash> label;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto& it = interactions[i];
    if (it.a >= side_a_count || it.b >= side_b_count) {
      throw ValidationError("interaction " + std::to_string(i) + " references user outside (" +
                            std::to_string(side_a_count) + ", " + std::to_string(side_b_count) +
                            ")");
    }
    auto [pos, inserted] = label.try_emplace(Pair{it.a, it.b}, it.matched);
    if (!inserted && pos->second != it.matched) {
      throw ValidationError("conflicting match labels for pair (" + std::to_string(it.a) + ", " +
                            std::to_string(it.b) + ")");
    }
  }
}

InteractionLog parse_interactions(std::istream& in) {
  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  std::uint64_t max_a = 0;
  std::uint64_t max_b = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != 4) {
      throw ParseError("expected 4 fields, got " + std::to_string(fields.size()), line_no);
    }
    std::uint64_t v[4];
    for (int f = 0; f < 4; ++f) {
      if (!parse_field(fields[f], v[f])) {
        throw ParseError("field " + std::to_string(f + 1) + " is not a non-negative integer",
                         line_no);
      }
    }
    if (v[0] > UINT32_MAX - 1 || v[1] > UINT32_MAX - 1) throw ParseError("id too large", line_no);
    if (v[2] > 1) throw ParseError("direction must be 0 or 1", line_no);
    if (v[3] > 1) throw ParseError("match must be 0 or 1", line_no);
    max_a = std::max(max_a, v[0]);
    max_b = std::max(max_b, v[1]);
    log.interactions.push_back(
        {static_cast<UserId>(v[0]), static_cast<UserId>(v[1]), v[2] == 1, v[3] == 1});
  }
  if (log.interactions.empty()) throw ValidationError("interaction file contains no records");
  log.side_a_count = max_a + 1;
  log.side_b_count = max_b + 1;
  log.validate();
  return log;
}

InteractionLog load_interactions(const std::filesystem::path& path, InteractionFormat) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_interactions(in);
}

void write_interactions(std::ostream& out, const InteractionLog& log) {
  for (const auto& it : log.interactions) {
    out << it.a << '\t' << it.b << '\t' << (it.a_to_b ? 1 : 0) << '\t' << (it.matched ? 1 : 0)
        << '\n';
  }
}

void save_interactions(const std::filesystem::path& path, const InteractionLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_interactions(out, log);
}

KCoreResult k_core_filter(const InteractionLog& log, std::size_t k) {
  if (k < 1) throw ConfigError("k-core k must be >= 1");
  const std::size_t n = log.side_a_count;
  const std::size_t m = log.side_b_count;

  // Incidence lists over interaction indices.
  std::vector<std::vector<std::size_t>> by_a(n), by_b(m);
  for (std::size_t i = 0; i < log.interactions.size(); ++i) {
    by_a[log.interactions[i].a].push_back(i);
    by_b[log.interactions[i].b].push_back(i);
  }
  std::vector<std::size_t> deg_a(n), deg_b(m);
  for (std::size_t u = 0; u < n; ++u) deg_a[u] = by_a[u].size();
  for (std::size_t u = 0; u < m; ++u) deg_b[u] = by_b[u].size();

  std::vector<char> alive_edge(log.interactions.size(), 1);
  std::vector<char> gone_a(n, 0), gone_b(m, 0);
  std::vector<std::pair<Side, UserId>> queue;
  for (std::size_t u = 0; u < n; ++u)
    if (deg_a[u] < k) {
      gone_a[u] = 1;
      queue.emplace_back(Side::A, static_cast<UserId>(u));
    }
  for (std::size_t u = 0; u < m; ++u)
    if (deg_b[u] < k) {
      gone_b[u] = 1;
      queue.emplace_back(Side::B, static_cast<UserId>(u));
    }

  while (!queue.empty()) {
    auto [side, u] = queue.back();
    queue.pop_back();
    const auto& edges = side == Side::A ? by_a[u] : by_b[u];
    for (std::size_t e : edges) {
      if (!alive_edge[e]) continue;
      alive_edge[e] = 0;
      const auto& it = log.interactions[e];
      if (side == Side::A) {
        if (!gone_b[it.b] && --deg_b[it.b] < k) {
          gone_b[it.b] = 1;
          queue.emplace_back(Side::B, it.b);
        }
      } else {
        if (!gone_a[it.a] && --deg_a[it.a] < k) {
          gone_a[it.a] = 1;
          queue.emplace_back(Side::A, it.a);
        }
      }
    }
  }

  KCoreResult result;
  std::vector<UserId> remap_a(n, 0), remap_b(m, 0);
  for (std::size_t u = 0; u < n; ++u)
    if (!gone_a[u]) {
      remap_a[u] = static_cast<UserId>(result.original_a.size());
      result.original_a.push_back(static_cast<UserId>(u));
    }
  for (std::size_t u = 0; u < m; ++u)
    if (!gone_b[u]) {
      remap_b[u] = static_cast<UserId>(result.original_b.size());
      result.original_b.push_back(static_cast<UserId>(u));
    }
  result.log.side_a_count = result.original_a.size();
  result.log.side_b_count = result.original_b.size();
  for (std::size_t e = 0; e < log.interactions.size(); ++e) {
    if (!alive_edge[e]) continue;
    auto it = log.interactions[e];
    it.a = remap_a[it.a];
    it.b = remap_b[it.b];
    result.log.interactions.push_back(it);
  }
  result.empty = result.log.interactions.empty();
  if (result.empty) {
    result.log.side_a_count = 0;
    result.log.side_b_count = 0;
    result.original_a.clear();
    result.original_b.clear();
  }
  return result;
}

DatasetSplit split(const InteractionLog& log, const SplitRatios& ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
  }
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1 (got " + std::to_string(sum) + ")");
  }

  const std::size_t total = log.interactions.size();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  portable_shuffle(order.begin(), order.end(), rng);

  const auto n_train =
      std::min(total, static_cast<std::size_t>(std::llround(static_cast<double>(total) * ratios[0])));
  const auto n_valid = std::min(
      total - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(total) * ratios[1])));

  DatasetSplit out;
  for (auto* part : {&out.train, &out.validation, &out.test}) {
    part->side_a_count = log.side_a_count;
    part->side_b_count = log.side_b_count;
  }
  for (std::size_t i = 0; i < total; ++i) {
    auto& part = i < n_train ? out.train : (i < n_train + n_valid ? out.validation : out.test);
    part.interactions.push_back(log.interactions[order[i]]);
  }
  out.matched_pairs_test = out.test.matched_pairs();
  return out;
}

TreatmentSets derive_treatment_sets(const InteractionLog& train) {
  // bit 0: a -> b seen, bit 1: b -> a seen
  std::map<Pair, unsigned> seen;
  for (const auto& it : train.interactions) {
    if (!it.matched) continue;
    seen[{it.a, it.b}] |= it.a_to_b ? 1u : 2u;
  }
  TreatmentSets sets;
  for (const auto& [pair, bits] : seen) {
    if (bits == 3u) {
      sets.d11.push_back(pair);
    } else if (bits == 1u) {
      sets.d10.push_back(pair);
    } else {
      sets.d01.push_back(pair);
    }
  }
  return sets;
}

InteractionLog generate_synthetic(const SyntheticParams& p) {
  if (p.n < 10 || p.m < 10) throw ConfigError("synthetic market needs n, m >= 10");
  if (!(p.density > 0.0 && p.density < 1.0)) throw ConfigError("density must lie in (0, 1)");
  if (p.dim < 1) throw ConfigError("latent dimension must be >= 1");

  Rng rng(p.seed);
  const double scale = 1.0 / std::sqrt(std::sqrt(static_cast<double>(p.dim)));
  std::vector<double> xa(p.n * p.dim), yb(p.m * p.dim);
  for (auto& v : xa) v = scale * standard_normal(rng);
  for (auto& v : yb) v = scale * standard_normal(rng);

  std::vector<double> logit(p.n * p.m);
  for (std::size_t a = 0; a < p.n; ++a) {
    for (std::size_t b = 0; b < p.m; ++b) {
      double dot = 0.0;
      for (std::size_t k = 0; k < p.dim; ++k) dot += xa[a * p.dim + k] * yb[b * p.dim + k];
      logit[a * p.m + b] = p.sharpness * dot;
    }
  }

  // Bisection on the offset so the mean emission probability hits `density`.
  auto mean_prob = [&](double offset) {
    double s = 0.0;
    for (double z : logit) s += sigmoid(z + offset);
    return s / static_cast<double>(logit.size());
  };
  double lo = -60.0, hi = 60.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (mean_prob(mid) < p.density ? lo : hi) = mid;
  }
  const double offset = 0.5 * (lo + hi);

  InteractionLog log;
  log.side_a_count = p.n;
  log.side_b_count = p.m;
  for (std::size_t a = 0; a < p.n; ++a) {
    for (std::size_t b = 0; b < p.m; ++b) {
      const double prob = sigmoid(logit[a * p.m + b] + offset);
      const bool ab = uniform_unit(rng) < prob;
      const bool ba = uniform_unit(rng) < prob;
      const bool matched = ab && ba;
      if (ab) log.interactions.push_back({static_cast<UserId>(a), static_cast<UserId>(b), true, matched});
      if (ba) log.interactions.push_back({static_cast<UserId>(a), static_cast<UserId>(b), false, matched});
    }
  }
  return log;
}

namespace {

constexpr const char* kPartFiles[3] = {"train.tsv", "validation.tsv", "test.tsv"};

InteractionLog load_part(const std::filesystem::path& path, std::size_t n, std::size_t m) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing split file " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  InteractionLog log;
  // an empty partition is written as an empty file
  if (text.str().find_first_not_of(" \t\r\n") != std::string::npos) log = parse_interactions(text);
  log.side_a_count = n;
  log.side_b_count = m;
  log.validate();
  return log;
}

}  // namespace

void save_split_manifest(const std::filesystem::path& dir, const SplitManifest& manifest) {
  std::filesystem::create_directories(dir);
  const auto& s = manifest.split;
  save_interactions(dir / kPartFiles[0], s.train);
  save_interactions(dir / kPartFiles[1], s.validation);
  save_interactions(dir / kPartFiles[2], s.test);

  nlohmann::ordered_json j;
  j["format"] = "rrs.split";
  j["version"] = 1;
  j["n"] = s.train.side_a_count;
  j["m"] = s.train.side_b_count;
  j["records"] = {{"train", s.train.interactions.size()},
                  {"validation", s.validation.interactions.size()},
                  {"test", s.test.interactions.size()}};
  j["split_seed"] = manifest.split_seed;
  j["ratios"] = manifest.ratios;
  j["kcore_k"] = manifest.kcore_k;
  j["original_a"] = manifest.original_a;
  j["original_b"] = manifest.original_b;
  if (manifest.synthetic) {
    const auto& p = *manifest.synthetic;
    j["synthetic"] = {{"n", p.n},         {"m", p.m},       {"dim", p.dim},
                      {"density", p.density}, {"seed", p.seed}, {"sharpness", p.sharpness}};
  } else {
    j["synthetic"] = nullptr;
  }
  j["root_seed"] = manifest.root_seed;
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
  for (const auto& [name, value] : manifest.derived_seeds) seeds[name] = value;
  j["derived_seeds"] = seeds;

  std::ofstream out(dir / "metadata.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "metadata.json").string());
  out << j.dump(2) << '\n';
}

SplitManifest load_split_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "metadata.json");
  if (!in) throw ValidationError("missing " + (dir / "metadata.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("metadata.json: ") + e.what());
  }
  if (j.value("format", "") != "rrs.split") throw ValidationError("metadata.json: not a split manifest");

  SplitManifest out;
  try {
    const auto n = j.at("n").get<std::size_t>();
    const auto m = j.at("m").get<std::size_t>();
    out.split.train = load_part(dir / kPartFiles[0], n, m);
    out.split.validation = load_part(dir / kPartFiles[1], n, m);
    out.split.test = load_part(dir / kPartFiles[2], n, m);
    out.split.matched_pairs_test = out.split.test.matched_pairs();
    out.ratios = j.at("ratios").get<SplitRatios>();
    out.split_seed = j.at("split_seed").get<std::uint64_t>();
    out.kcore_k = j.at("kcore_k").get<std::size_t>();
    out.original_a = j.at("original_a").get<std::vector<UserId>>();
    out.original_b = j.at("original_b").get<std::vector<UserId>>();
    if (!j.at("synthetic").is_null()) {
      const auto& p = j["synthetic"];
      out.synthetic = SyntheticParams{p.at("n").get<std::size_t>(),    p.at("m").get<std::size_t>(),
                                      p.at("dim").get<std::size_t>(),  p.at("density").get<double>(),
                                      p.at("seed").get<std::uint64_t>(), p.at("sharpness").get<double>()};
    }
    out.root_seed = j.at("root_seed").get<std::uint64_t>();
    for (const auto& [name, value] : j.at("derived_seeds").items()) {
      out.derived_seeds.emplace_back(name, value.get<std::uint64_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("metadata.json: ") + e.what());
  }
  return out;
}

}  // namespace rrs

#include "rrs/cli/commands.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include "rrs/streaming.hpp"

namespace rrs::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kModes = {"backbone", "dual", "crrs-simple", "crrs-rerank"};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

// Files written by one command, recorded in the run manifest on commit.
class Outputs {
 public:
  Outputs(RunPaths paths, std::string command) : paths_(std::move(paths)), command_(std::move(command)) {}

  void text(const fs::path& path, const std::string& content) {
    write_text(path, content);
    note(path);
  }
  void note(const fs::path& path) { files_.push_back(fs::relative(path, paths_.root).generic_string()); }

  void commit(const ExperimentConfig& config) {
    write_text(paths_.config(), to_key_values(config));
    nlohmann::json j = nlohmann::json::object();
    if (fs::exists(paths_.manifest())) {
      std::ifstream in(paths_.manifest());
      j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded() || !j.is_object()) j = nlohmann::json::object();
    }
    j["format"] = "rrs.run";
    j["version"] = 1;
    j["root_seed"] = config.root_seed;
    for (const auto& [name, value] : derived_seeds(config)) j["derived_seeds"][name] = value;
    for (const auto& f : files_) j["files"][f] = command_;
    j["files"]["config.cfg"] = "last resolved config";
    write_text(paths_.manifest(), j.dump(2) + "\n");
  }

 private:
  RunPaths paths_;
  std::string command_;
  std::vector<std::string> files_;
};

struct Invocation {
  std::string config_file;
  KeyValues overrides;
  std::vector<std::string> sets;
  std::string stage = "all";
  std::string mode;
  std::string events;
  std::string name = "trajectory";
  bool from_backbone = false;
};

ExperimentConfig resolve(const Invocation& inv) {
  const KeyValues file = inv.config_file.empty() ? KeyValues{} : load_key_values(inv.config_file);
  KeyValues overrides;
  for (const auto& s : inv.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  for (const auto& [k, v] : inv.overrides) overrides[k] = v;

  std::string out;
  if (auto it = overrides.find("out"); it != overrides.end()) {
    out = it->second;
  } else if (auto jt = file.find("out"); jt != file.end()) {
    out = jt->second;
  }
  if (out.empty()) throw UsageError("--out is required");

  // The run directory remembers the last resolved config; it sits below the
  // explicit config file and flags.
  KeyValues base;
  const RunPaths paths{out};
  if (fs::exists(paths.config())) base = load_key_values(paths.config());
  for (const auto& [k, v] : file) base[k] = v;
  auto config = resolve_config(base, overrides);
  config.out = out;
  config.validate();
  return config;
}

std::string json_line(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

void check_shape(const LatentFactorModel& model, std::size_t n, std::size_t m, const std::string& what) {
  if (model.n() != n || model.m() != m) {
    throw ValidationError(what + " has n=" + std::to_string(model.n()) + ", m=" + std::to_string(model.m()) +
                          " but the split manifest has n=" + std::to_string(n) + ", m=" + std::to_string(m));
  }
}

std::string report_tsv(const MetricReport& report) {
  std::ostringstream os;
  write_tsv(os, report);
  return os.str();
}

std::string run_dump(const ScoredRun& run, Side side) {
  std::ostringstream os;
  write_run_dump(os, run, side);
  return os.str();
}

std::string events_tsv(const RecommendationRun& run, const MatchSet& targets) {
  std::ostringstream os;
  for (Side side : {Side::A, Side::B}) {
    const std::size_t count = side == Side::A ? targets.side_a_count() : targets.side_b_count();
    for (UserId u = 0; u < count; ++u) {
      if (targets.of(side, u).empty()) continue;
      os << to_string(side) << '\t' << u << '\t';
      const auto& list = run.list(side, u);
      for (std::size_t i = 0; i < list.size(); ++i) os << (i ? "," : "") << list[i];
      os << '\n';
    }
  }
  return os.str();
}

nlohmann::ordered_json history_json(const TrainResult& r) {
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const auto& e : r.history) {
    epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"validation", e.validation}});
  }
  return {{"best_epoch", r.best_epoch},
          {"best_validation", r.best_validation},
          {"early_stopped", r.early_stopped},
          {"epochs", epochs}};
}

nlohmann::ordered_json history_json(const FinetuneResult& r) {
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const auto& e : r.history) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss10", e.loss10},
                      {"loss11", e.loss11},
                      {"loss01", e.loss01},
                      {"validation", e.validation}});
  }
  return {{"best_epoch", r.best_epoch}, {"epochs", epochs}, {"warnings", r.warnings}};
}

void cmd_prepare(const ExperimentConfig& config, std::ostream& out) {
  const RunPaths paths{config.out};
  Outputs outputs(paths, "prepare");
  const auto manifest = prepare_dataset(config);
  save_split_manifest(paths.data(), manifest);
  for (const char* f : {"train.tsv", "validation.tsv", "test.tsv", "metadata.json"}) outputs.note(paths.data() / f);
  outputs.commit(config);
  const auto& s = manifest.split;
  out << "prepared n=" << s.train.side_a_count << " m=" << s.train.side_b_count
      << " records train/validation/test=" << s.train.interactions.size() << "/"
      << s.validation.interactions.size() << "/" << s.test.interactions.size()
      << " test matches=" << s.matched_pairs_test.size() << "\n";
}

void cmd_train(const ExperimentConfig& config, const std::string& stage, std::ostream& out) {
  const RunPaths paths{config.out};
  Outputs outputs(paths, "train");
  const auto manifest = load_split_manifest(paths.data());
  const auto& s = manifest.split;
  const std::size_t n = s.train.side_a_count;
  const std::size_t m = s.train.side_b_count;
  const MatchSet validation(n, m, s.validation.matched_pairs());

  TrainConfig pre = config.pretrain;
  pre.seed = config.seed("backbone.train");
  const auto result = train(init_model(n, m, config.dim, config.seed("backbone.init")), s.train, validation, pre);
  fs::create_directories(paths.backbone().parent_path());
  save_checkpoint(paths.backbone(), result.best, {result.optimizer.step, result.optimizer.params});
  outputs.note(paths.backbone());
  out << "pretrain: best epoch " << result.best_epoch << ", validation recall " << result.best_validation << "\n";

  nlohmann::ordered_json history;
  history["pretrain"] = history_json(result);
  history["finetune"] = nullptr;
  if (stage == "all") {
    FinetuneConfig ft = config.finetune;
    ft.train.seed = config.seed("finetune");
    const auto sets = derive_treatment_sets(s.train);
    const auto tuned = counterfactual_finetune(init_from_pretrained(result.best), sets, s.train, validation, ft);
    save_treatment_models(paths.treatment_models(), tuned.models, "finetuned");
    outputs.note(paths.treatment_models());
    history["finetune"] = history_json(tuned);
    out << "finetune: best epoch " << tuned.best_epoch << " (d11=" << sets.d11.size()
        << ", d10=" << sets.d10.size() << ", d01=" << sets.d01.size() << ")\n";
    for (const auto& w : tuned.warnings) out << "warning: " << w << "\n";
  } else if (fs::exists(paths.treatment_models())) {
    // a stale stage-2 checkpoint would no longer match the new backbone
    fs::remove(paths.treatment_models());
  }
  outputs.text(paths.history(), json_line(history));
  outputs.commit(config);
}

void cmd_evaluate(const ExperimentConfig& config, const std::string& mode, bool from_backbone,
                  std::ostream& out) {
  const RunPaths paths{config.out};
  Outputs outputs(paths, "evaluate");
  const auto manifest = load_split_manifest(paths.data());
  const auto& s = manifest.split;
  const std::size_t n = s.train.side_a_count;
  const std::size_t m = s.train.side_b_count;
  const auto context = make_eval_context(s, config.eval);
  const std::size_t k = config.eval.k;

  auto load_backbone = [&] {
    if (!fs::exists(paths.backbone())) throw ValidationError("missing " + paths.backbone().string() + "; run train first");
    auto model = load_checkpoint(paths.backbone());
    check_shape(model, n, m, "backbone checkpoint");
    return model;
  };
  auto load_models = [&] {
    if (from_backbone) return init_from_pretrained(load_backbone());
    if (!fs::exists(paths.treatment_models())) {
      throw ValidationError("missing " + paths.treatment_models().string() + "; run train --stage all first");
    }
    auto models = load_treatment_models(paths.treatment_models());
    for (auto t : {Treatment::T10, Treatment::T11, Treatment::T01}) {
      check_shape(models.model(t), n, m, "treatment model f" + std::string(to_string(t)).substr(1));
    }
    check_shape(models.pretrained, n, m, "pretrained model");
    return models;
  };

  Evaluation eval;
  if (mode == "backbone") {
    const auto model = load_backbone();
    eval = full_rank_evaluate(probability_row_scorer(model), context, k);
  } else if (mode == "dual") {
    const MatchSet validation(n, m, s.validation.matched_pairs());
    TrainConfig pre = config.pretrain;
    pre.seed = config.seed("backbone.train");
    const auto dual =
        train_dual(init_model(n, m, config.dim, config.seed("backbone.init")), s.train, validation, pre, true);
    eval = full_rank_evaluate(dual_row_scorer(dual.models), context, k);
  } else if (mode == "crrs-simple") {
    const auto models = load_models();
    eval = full_rank_evaluate(simple_row_scorer(models, config.finetune.weights), context, k);
  } else if (mode == "crrs-rerank") {
    const auto models = load_models();
    const MatchSet train_positives(n, m, s.train.matched_pairs());
    VacantSlotCache cache(models.pretrained, train_positives, config.eval.ybar_sample_size,
                          config.seed("ybar"), config.eval.ybar_top_q);
    eval = full_rank_evaluate(rerank_row_scorer(models, cache), context, k);
  } else {
    throw UsageError("unknown mode '" + mode + "'");
  }

  const auto dir = paths.eval(mode);
  outputs.text(dir / "report.json", to_json(eval.report) + "\n");
  outputs.text(dir / "report.tsv", report_tsv(eval.report));
  outputs.text(dir / "run_a.tsv", run_dump(eval.ranked, Side::A));
  outputs.text(dir / "run_b.tsv", run_dump(eval.ranked, Side::B));
  outputs.text(dir / "histogram.json", to_json(redundancy_rank_histogram(eval.ranked.run, context.targets)) + "\n");
  outputs.text(dir / "events.tsv", events_tsv(eval.ranked.run, context.targets));
  outputs.commit(config);

  const auto& r = eval.report;
  out << mode << ": recall " << r.recall_avg << " precision " << r.precision_avg << " ndcg " << r.ndcg_avg
      << " | crecall " << r.crecall << " srecall " << r.srecall << " rndcg " << r.rndcg << "\n";
}

std::vector<UserId> parse_id_list(const std::string& text, std::size_t bound, std::size_t line_no) {
  std::vector<UserId> ids;
  if (text.empty()) return ids;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != part.size()) throw ParseError("bad id '" + part + "' in list", line_no);
    if (v >= bound) throw ParseError("listed id " + part + " is out of range", line_no);
    ids.push_back(static_cast<UserId>(v));
  }
  return ids;
}

void cmd_stream(const ExperimentConfig& config, const std::string& events_path, const std::string& name,
                std::ostream& out) {
  const RunPaths paths{config.out};
  Outputs outputs(paths, "stream");
  const auto manifest = load_split_manifest(paths.data());
  const auto& s = manifest.split;
  const std::size_t n = s.test.side_a_count;
  const std::size_t m = s.test.side_b_count;
  const MatchSet targets(n, m, s.matched_pairs_test);

  std::ifstream in(events_path);
  if (!in) throw ValidationError("cannot open events file " + events_path);

  StreamingMetricsState state(config.eval.k);
  std::ostringstream traj;
  traj << std::setprecision(17);
  traj << "t\tside\tuser\tcrecall\tcprecision\tsrecall\tsprecision"
          "\tmirror_crecall\tmirror_cprecision\tmirror_srecall\tmirror_sprecision\n";
  auto row = [&traj](std::size_t t, const std::string& side, const std::string& user, const StreamingMetricsState& st) {
    const auto e = st.exact();
    const auto& r = st.mirror();
    traj << t << '\t' << side << '\t' << user << '\t' << e.crecall << '\t' << e.cprecision << '\t' << e.srecall
         << '\t' << e.sprecision << '\t' << r.crecall << '\t' << r.cprecision << '\t' << r.srecall << '\t'
         << r.sprecision << '\n';
  };
  row(0, "-", "-", state);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, '\t')) f.push_back(part);
    if (f.size() == 2) f.emplace_back();
    if (f.size() != 3) throw ParseError("expected side<TAB>user<TAB>list", line_no);
    if (f[0] != "A" && f[0] != "B") throw ParseError("side must be A or B", line_no);
    const Side side = f[0] == "A" ? Side::A : Side::B;
    const auto user = parse_id_list(f[1], side == Side::A ? n : m, line_no);
    if (user.size() != 1) throw ParseError("expected one user id", line_no);
    const auto list = parse_id_list(f[2], side == Side::A ? m : n, line_no);
    try {
      state.process_user(side, user[0], list, targets.of(side, user[0]));
    } catch (const UsageError& e) {
      throw ValidationError("events line " + std::to_string(line_no) + ": " + e.what());
    }
    row(state.processed(), f[0], f[1], state);
  }

  outputs.text(paths.stream() / (name + ".tsv"), traj.str());
  outputs.commit(config);
  const auto e = state.exact();
  out << "stream: " << state.processed() << " events, crecall " << e.crecall << " srecall " << e.srecall << "\n";
}

void cmd_adjust(const ExperimentConfig& config, const std::string& mode, std::ostream& out) {
  const RunPaths paths{config.out};
  Outputs outputs(paths, "adjust");
  const auto manifest = load_split_manifest(paths.data());
  const auto& s = manifest.split;
  const std::size_t n = s.test.side_a_count;
  const std::size_t m = s.test.side_b_count;
  const MatchSet targets(n, m, s.matched_pairs_test);

  ScoredRun scored;
  scored.run.k = config.eval.k;
  scored.run.lists_a.assign(n, {});
  scored.run.lists_b.assign(m, {});
  for (Side side : {Side::A, Side::B}) {
    const auto path = paths.eval(mode) / (side == Side::A ? "run_a.tsv" : "run_b.tsv");
    std::ifstream in(path);
    if (!in) throw ValidationError("missing " + path.string() + "; run evaluate --mode " + mode + " first");
    read_run_dump(in, scored, side);
  }
  scored.run.validate();

  const auto adjust_seed = config.seed("adjust");
  Rng rng_uni(derive_seed(adjust_seed, "uni"));
  Rng rng_rep(derive_seed(adjust_seed, "rep"));
  const auto uni = adjust_uni(scored.run, targets, rng_uni);
  const auto rep = adjust_rep(scored.run, targets, rng_rep);

  const auto dir = paths.adjust(mode);
  nlohmann::ordered_json summary;
  auto emit = [&](const std::string& tag, const RecommendationRun& run, const AdjustmentReport* report) {
    const auto metrics = evaluate_run(run, targets);
    outputs.text(dir / (tag + "_report.json"), to_json(metrics) + "\n");
    outputs.text(dir / (tag + "_report.tsv"), report_tsv(metrics));
    nlohmann::ordered_json entry;
    if (report) {
      entry["replaced"] = report->replaced;
      entry["skipped"] = report->skipped;
    }
    entry["histogram"] = redundancy_rank_histogram(run, targets).counts;
    summary[tag] = entry;
    return metrics;
  };
  const auto before = emit("original", scored.run, nullptr);
  const auto after_uni = emit("uni", uni.run, &uni.report);
  const auto after_rep = emit("rep", rep.run, &rep.report);
  outputs.text(dir / "summary.json", json_line(summary));
  outputs.commit(config);

  out << "adjust " << mode << ": crecall rep/orig/uni " << after_rep.crecall << " / " << before.crecall << " / "
      << after_uni.crecall << ", srecall " << after_rep.srecall << " / " << before.srecall << " / "
      << after_uni.srecall << "\n";
}

void bind(CLI::App* sub, const std::string& flag, const std::string& key, Invocation& inv, const std::string& help) {
  sub->add_option_function<std::string>(
      flag, [&inv, key](const std::string& v) { inv.overrides[key] = v; }, help);
}

void add_common(CLI::App* sub, Invocation& inv) {
  sub->add_option("--config", inv.config_file, "Key-value config file")->check(CLI::ExistingFile);
  bind(sub, "--out", "out", inv, "Run directory");
  bind(sub, "--seed", "seed", inv, "Root seed");
  sub->add_option("--set", inv.sets, "Override any config key: --set key=value");
}

void add_training_flags(CLI::App* sub, Invocation& inv) {
  bind(sub, "--dim", "model.dim", inv, "Embedding dimension");
  bind(sub, "--lr", "pretrain.learning_rate", inv, "Backbone learning rate");
  bind(sub, "--epochs", "pretrain.max_epochs", inv, "Backbone epoch limit");
  bind(sub, "--patience", "pretrain.patience", inv, "Backbone early-stopping patience");
  bind(sub, "--batch-size", "pretrain.batch_size", inv, "Backbone mini-batch size");
  bind(sub, "--eval-k", "pretrain.eval_k", inv, "K of the validation recall used for early stopping");
}

}  // namespace

SplitManifest prepare_dataset(const ExperimentConfig& config) {
  SplitManifest manifest;
  InteractionLog log;
  if (config.synthetic) {
    auto params = config.synthetic_params;
    params.seed = config.seed("synthetic");
    log = generate_synthetic(params);
    manifest.synthetic = params;
  } else {
    log = load_interactions(config.data_path);
  }

  if (config.kcore_k > 0) {
    auto filtered = k_core_filter(log, config.kcore_k);
    if (filtered.empty) {
      throw ValidationError("k-core filtering with k=" + std::to_string(config.kcore_k) + " left no interactions");
    }
    log = std::move(filtered.log);
    manifest.original_a = std::move(filtered.original_a);
    manifest.original_b = std::move(filtered.original_b);
  } else {
    manifest.original_a.resize(log.side_a_count);
    manifest.original_b.resize(log.side_b_count);
    for (std::size_t i = 0; i < log.side_a_count; ++i) manifest.original_a[i] = static_cast<UserId>(i);
    for (std::size_t i = 0; i < log.side_b_count; ++i) manifest.original_b[i] = static_cast<UserId>(i);
  }

  manifest.ratios = config.ratios;
  manifest.split_seed = config.seed("split");
  manifest.split = split(log, config.ratios, manifest.split_seed);
  manifest.kcore_k = config.kcore_k;
  manifest.root_seed = config.root_seed;
  manifest.derived_seeds = derived_seeds(config);
  return manifest;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reciprocal recommendation toolkit: two-sided metrics, CRRS training and evaluation", "rrs"};
  app.require_subcommand(1);
  Invocation inv;

  auto* prepare = app.add_subcommand("prepare", "Load or synthesize data, apply k-core, split");
  add_common(prepare, inv);
  prepare->add_flag_callback("--synthetic", [&inv] { inv.overrides["data.synthetic"] = "true"; },
                             "Generate the planted synthetic market");
  bind(prepare, "--data", "data.path", inv, "Interaction TSV file");
  bind(prepare, "--n", "synthetic.n", inv, "Synthetic A-side users");
  bind(prepare, "--m", "synthetic.m", inv, "Synthetic B-side users");
  bind(prepare, "--density", "synthetic.density", inv, "Synthetic mean interaction probability");
  bind(prepare, "--kcore", "kcore.k", inv, "k-core threshold (0 disables)");
  bind(prepare, "--ratios", "split.ratios", inv, "train,validation,test fractions");

  auto* train_cmd = app.add_subcommand("train", "Pre-train the backbone and fine-tune treatment models");
  add_common(train_cmd, inv);
  add_training_flags(train_cmd, inv);
  train_cmd->add_option("--stage", inv.stage, "all or pretrain-only")
      ->check(CLI::IsMember({"all", "pretrain-only"}));

  auto* evaluate = app.add_subcommand("evaluate", "Full-ranking evaluation of one method");
  add_common(evaluate, inv);
  add_training_flags(evaluate, inv);
  evaluate->add_option("--mode", inv.mode, "backbone, dual, crrs-simple or crrs-rerank")
      ->required()
      ->check(CLI::IsMember(kModes));
  bind(evaluate, "--k", "eval.k", inv, "List length K");
  bind(evaluate, "--candidate-policy", "eval.candidate_policy", inv, "all or exclude-train-val-positives");
  evaluate->add_flag("--from-backbone", inv.from_backbone,
                     "crrs modes: use treatment models copied from the backbone instead of the fine-tuned ones");

  auto* stream = app.add_subcommand("stream", "Replay per-user lists through the streaming metrics");
  add_common(stream, inv);
  stream->add_option("--events", inv.events, "Events file: side<TAB>user<TAB>comma-separated list")
      ->required();
  stream->add_option("--name", inv.name, "Trajectory name under stream/");
  bind(stream, "--k", "eval.k", inv, "List length K");

  auto* adjust = app.add_subcommand("adjust", "Apply the redundancy adjusters to an evaluated run");
  add_common(adjust, inv);
  adjust->add_option("--mode", inv.mode, "Which evaluated run to adjust")->required()->check(CLI::IsMember(kModes));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    const auto config = resolve(inv);
    if (app.got_subcommand(prepare)) {
      cmd_prepare(config, out);
    } else if (app.got_subcommand(train_cmd)) {
      cmd_train(config, inv.stage, out);
    } else if (app.got_subcommand(evaluate)) {
      cmd_evaluate(config, inv.mode, inv.from_backbone, out);
    } else if (app.got_subcommand(stream)) {
      cmd_stream(config, inv.events, inv.name, out);
    } else {
      cmd_adjust(config, inv.mode, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rrs::cli

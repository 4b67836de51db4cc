// Experiment configs, run manifests, and the command implementations behind
// the CLI. A config file fully specifies a run: two loads of the same file
// produce identical runs, unknown keys are rejected, and every output byte
// except wall-clock fields is determined by config plus seeds.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "intradist/analysis.hpp"
#include "intradist/checkpoint.hpp"
#include "intradist/data.hpp"
#include "intradist/io.hpp"
#include "intradist/model.hpp"
#include "intradist/schedule.hpp"
#include "intradist/sensitivity.hpp"
#include "intradist/trainer.hpp"

namespace intradist {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct ExperimentConfig {
  std::string name;
  TaskKind task = TaskKind::classification;

  // dataset
  std::int64_t train_samples = 0;
  std::int64_t val_samples = 0;
  std::int64_t dims = 0;
  std::int64_t classes = 0;      // classification
  double margin = 2.0;           // classification
  double target_noise = 0.0;     // regression
  std::uint64_t dataset_seed = 0;

  TrainConfig trainer;  // model dims resolved from the dataset section
  std::string teacher_path;
  std::string output_dir;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::span<const char* const> allowed,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("unknown config key '" +
                                  (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
  return obj.contains(key) ? obj.at(key).get<T>() : fallback;
}

template <typename T>
T require(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) {
    throw std::invalid_argument("missing config key '" +
                                (where.empty() ? key : where + "." + key) + "'");
  }
  return obj.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& root) {
  static constexpr const char* kTop[] = {"experiment-name", "task",     "dataset",
                                         "model",           "trainer",  "schedule",
                                         "seeds",           "output"};
  static constexpr const char* kDataset[] = {"train-samples", "val-samples",
                                             "dims",          "classes",
                                             "margin",        "target-noise",
                                             "seed"};
  static constexpr const char* kModel[] = {"hidden-dims", "dropout-rate"};
  static constexpr const char* kTrainer[] = {
      "mode",        "k-passes",         "steps",       "batch-size",
      "learning-rate", "optimizer",      "weight-decay", "checkpoint-every",
      "eval-batches", "share-masks",     "teacher"};
  static constexpr const char* kSchedule[] = {"alpha", "sentinel-p", "sentinel-q",
                                              "total-steps"};
  static constexpr const char* kSeeds[] = {"init", "data", "dropout"};

  if (!root.is_object()) throw std::invalid_argument("config root must be an object");
  detail::reject_unknown_keys(root, kTop, "");

  ExperimentConfig c;
  c.name = detail::require<std::string>(root, "experiment-name", "");
  const auto task_str = detail::require<std::string>(root, "task", "");
  if (task_str == "synthetic-classification") {
    c.task = TaskKind::classification;
  } else if (task_str == "synthetic-regression") {
    c.task = TaskKind::regression;
  } else {
    throw std::invalid_argument("unknown task '" + task_str + "'");
  }
  c.output_dir = detail::get_or<std::string>(root, "output", "");

  const auto& ds = root.at("dataset");
  detail::reject_unknown_keys(ds, kDataset, "dataset");
  c.train_samples = detail::require<std::int64_t>(ds, "train-samples", "dataset");
  c.val_samples = detail::require<std::int64_t>(ds, "val-samples", "dataset");
  c.dims = detail::require<std::int64_t>(ds, "dims", "dataset");
  c.dataset_seed = detail::require<std::uint64_t>(ds, "seed", "dataset");
  if (c.task == TaskKind::classification) {
    if (ds.contains("target-noise")) {
      throw std::invalid_argument("dataset.target-noise is a regression key");
    }
    c.classes = detail::require<std::int64_t>(ds, "classes", "dataset");
    c.margin = detail::get_or<double>(ds, "margin", 2.0);
  } else {
    if (ds.contains("classes") || ds.contains("margin")) {
      throw std::invalid_argument("dataset.classes/margin are classification keys");
    }
    c.target_noise = detail::require<double>(ds, "target-noise", "dataset");
  }

  const auto& model = root.at("model");
  detail::reject_unknown_keys(model, kModel, "model");
  c.trainer.model.input_dim = c.dims;
  c.trainer.model.output_dim = c.task == TaskKind::classification ? c.classes : 1;
  c.trainer.model.task = c.task;
  c.trainer.model.hidden_dims =
      detail::require<std::vector<std::int64_t>>(model, "hidden-dims", "model");
  c.trainer.model.dropout_rate =
      detail::require<double>(model, "dropout-rate", "model");

  const auto& tr = root.at("trainer");
  detail::reject_unknown_keys(tr, kTrainer, "trainer");
  c.trainer.mode =
      train_mode_from_name(detail::require<std::string>(tr, "mode", "trainer"));
  c.trainer.k_passes = static_cast<int>(detail::get_or<std::int64_t>(tr, "k-passes", 3));
  c.trainer.optim.steps = detail::require<std::int64_t>(tr, "steps", "trainer");
  c.trainer.optim.batch_size = detail::require<std::int64_t>(tr, "batch-size", "trainer");
  c.trainer.optim.learning_rate =
      detail::require<double>(tr, "learning-rate", "trainer");
  const auto optimizer_str = detail::get_or<std::string>(tr, "optimizer", "sgd");
  if (optimizer_str == "sgd") {
    c.trainer.optim.algo = OptimAlgo::sgd;
  } else if (optimizer_str == "adam") {
    c.trainer.optim.algo = OptimAlgo::adam;
  } else {
    throw std::invalid_argument("unknown optimizer '" + optimizer_str + "'");
  }
  c.trainer.optim.weight_decay = detail::get_or<double>(tr, "weight-decay", 0.0);
  c.trainer.checkpoint_every = detail::get_or<std::int64_t>(
      tr, "checkpoint-every", std::max<std::int64_t>(1, c.trainer.optim.steps / 10));
  c.trainer.eval_batches = detail::get_or<std::int64_t>(tr, "eval-batches", 100);
  c.trainer.share_masks = detail::get_or<bool>(tr, "share-masks", false);
  c.teacher_path = detail::get_or<std::string>(tr, "teacher", "");

  c.trainer.schedule.alpha = 0.0;
  c.trainer.schedule.n_total = c.trainer.optim.steps;
  if (root.contains("schedule")) {
    const auto& sc = root.at("schedule");
    detail::reject_unknown_keys(sc, kSchedule, "schedule");
    c.trainer.schedule.alpha = detail::require<double>(sc, "alpha", "schedule");
    c.trainer.schedule.sentinel_p = detail::get_or<double>(sc, "sentinel-p", 5.0);
    c.trainer.schedule.sentinel_q = detail::get_or<double>(sc, "sentinel-q", 10.0);
    c.trainer.schedule.n_total =
        detail::get_or<std::int64_t>(sc, "total-steps", c.trainer.optim.steps);
  } else if (c.trainer.mode == TrainMode::intra_distill) {
    throw std::invalid_argument("trainer.mode=intra requires a schedule section");
  }

  if (root.contains("seeds")) {
    const auto& se = root.at("seeds");
    detail::reject_unknown_keys(se, kSeeds, "seeds");
    c.trainer.seeds.init = detail::require<std::uint64_t>(se, "init", "seeds");
    c.trainer.seeds.data = detail::require<std::uint64_t>(se, "data", "seeds");
    c.trainer.seeds.dropout = detail::require<std::uint64_t>(se, "dropout", "seeds");
  }

  c.trainer.validate();
  if (c.train_samples < 1 || c.val_samples < 1) {
    throw std::invalid_argument("dataset needs train-samples and val-samples >= 1");
  }
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json ds{{"train-samples", c.train_samples},
                    {"val-samples", c.val_samples},
                    {"dims", c.dims},
                    {"seed", c.dataset_seed}};
  if (c.task == TaskKind::classification) {
    ds["classes"] = c.classes;
    ds["margin"] = c.margin;
  } else {
    ds["target-noise"] = c.target_noise;
  }
  nlohmann::json j{
      {"experiment-name", c.name},
      {"task", c.task == TaskKind::classification ? "synthetic-classification"
                                                  : "synthetic-regression"},
      {"dataset", ds},
      {"model",
       {{"hidden-dims", c.trainer.model.hidden_dims},
        {"dropout-rate", c.trainer.model.dropout_rate}}},
      {"trainer",
       {{"mode", train_mode_name(c.trainer.mode)},
        {"k-passes", c.trainer.k_passes},
        {"steps", c.trainer.optim.steps},
        {"batch-size", c.trainer.optim.batch_size},
        {"learning-rate", c.trainer.optim.learning_rate},
        {"optimizer", c.trainer.optim.algo == OptimAlgo::sgd ? "sgd" : "adam"},
        {"weight-decay", c.trainer.optim.weight_decay},
        {"checkpoint-every", c.trainer.checkpoint_every},
        {"eval-batches", c.trainer.eval_batches},
        {"share-masks", c.trainer.share_masks},
        {"teacher", c.teacher_path}}},
      {"schedule",
       {{"alpha", c.trainer.schedule.alpha},
        {"sentinel-p", c.trainer.schedule.sentinel_p},
        {"sentinel-q", c.trainer.schedule.sentinel_q},
        {"total-steps", c.trainer.schedule.n_total}}},
      {"seeds",
       {{"init", c.trainer.seeds.init},
        {"data", c.trainer.seeds.data},
        {"dropout", c.trainer.seeds.dropout}}}};
  if (!c.output_dir.empty()) j["output"] = c.output_dir;
  return j;
}

// Every known key path, used to resolve bare --set keys by unique suffix.
inline const std::vector<std::string>& config_key_paths() {
  static const std::vector<std::string> paths = {
      "experiment-name",        "task",
      "output",                 "dataset.train-samples",
      "dataset.val-samples",    "dataset.dims",
      "dataset.classes",        "dataset.margin",
      "dataset.target-noise",   "dataset.seed",
      "model.hidden-dims",      "model.dropout-rate",
      "trainer.mode",           "trainer.k-passes",
      "trainer.steps",          "trainer.batch-size",
      "trainer.learning-rate",  "trainer.optimizer",
      "trainer.weight-decay",   "trainer.checkpoint-every",
      "trainer.eval-batches",   "trainer.share-masks",
      "trainer.teacher",        "schedule.alpha",
      "schedule.sentinel-p",    "schedule.sentinel-q",
      "schedule.total-steps",   "seeds.init",
      "seeds.data",             "seeds.dropout"};
  return paths;
}

// Apply one "key=value" override onto the raw config json. Keys may be full
// dotted paths or a bare key name when that name is unique across the schema.
inline void apply_override(nlohmann::json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment +
                                "' is not of the form key=value");
  }
  std::string key = assignment.substr(0, eq);
  const std::string value_str = assignment.substr(eq + 1);

  if (key.find('.') == std::string::npos) {
    std::vector<std::string> matches;
    for (const std::string& path : config_key_paths()) {
      const auto dot = path.rfind('.');
      const std::string last = dot == std::string::npos ? path : path.substr(dot + 1);
      if (last == key) matches.push_back(path);
    }
    if (matches.size() == 1) {
      key = matches[0];
    } else if (matches.size() > 1) {
      std::string msg = "override key '" + key + "' is ambiguous, use one of:";
      for (const auto& m : matches) msg += " " + m;
      throw std::invalid_argument(msg);
    }
    // No match: keep the bare key; strict parsing reports it as unknown.
  }

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value_str);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value_str;  // plain string value
  }

  nlohmann::json* node = &root;
  std::string rest = key;
  for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
    const std::string head = rest.substr(0, dot);
    rest = rest.substr(dot + 1);
    if (!node->contains(head)) (*node)[head] = nlohmann::json::object();
    node = &(*node)[head];
  }
  (*node)[rest] = parsed;
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path,
                                         std::span<const std::string> overrides = {},
                                         std::optional<std::uint64_t> seed_override = {},
                                         nlohmann::json* raw_out = nullptr) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " +
                                e.what());
  }
  for (const std::string& o : overrides) apply_override(root, o);
  if (seed_override) {
    root["seeds"] = {{"init", *seed_override},
                     {"data", *seed_override + 1},
                     {"dropout", *seed_override + 2}};
  }
  if (raw_out) *raw_out = root;
  return parse_experiment_config(root);
}

// Train and validation splits, carved from one generator draw.
struct DataSplits {
  Dataset train;
  Dataset val;
};

inline DataSplits make_splits(const ExperimentConfig& c) {
  const std::int64_t total = c.train_samples + c.val_samples;
  const Dataset all =
      c.task == TaskKind::classification
          ? make_classification(total, c.dims, c.classes, c.margin, c.dataset_seed)
          : make_regression(total, c.dims, c.target_noise, c.dataset_seed);
  DataSplits splits;
  splits.train = slice_dataset(all, 0, c.train_samples);
  splits.val = slice_dataset(all, c.train_samples, c.val_samples);
  return splits;
}

// --- run manifest ---------------------------------------------------------

struct RunManifest {
  std::string experiment;
  std::string status;  // "complete" on success
  nlohmann::json config_echo;
  std::map<std::string, std::string> artifacts;  // name -> path relative to dir
  std::string version = kArtifactVersion;
  double wall_clock_ms = 0.0;
};

inline void save_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  nlohmann::json j{{"experiment-name", m.experiment},
                   {"status", m.status},
                   {"config", m.config_echo},
                   {"artifacts", m.artifacts},
                   {"version", m.version},
                   {"wall-clock-ms", m.wall_clock_ms}};
  write_text_file(dir / "manifest.json", j.dump(2) + "\n");
}

inline RunManifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("missing manifest: " + path.string());
  }
  const auto j = nlohmann::json::parse(read_text_file(path));
  RunManifest m;
  m.experiment = j.at("experiment-name").get<std::string>();
  m.status = j.at("status").get<std::string>();
  m.config_echo = j.at("config");
  m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  m.version = j.at("version").get<std::string>();
  m.wall_clock_ms = j.at("wall-clock-ms").get<double>();
  return m;
}

// --- commands ---------------------------------------------------------------

inline RunManifest run_train(const ExperimentConfig& config,
                             const std::filesystem::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  const DataSplits data = make_splits(config);

  TrainResult result;
  switch (config.trainer.mode) {
    case TrainMode::standard:
      result = train_standard(config.trainer, data.train, data.val);
      break;
    case TrainMode::intra_distill:
      result = train_intra_distill(config.trainer, data.train, data.val);
      break;
    case TrainMode::self_distill: {
      if (config.teacher_path.empty()) {
        throw std::invalid_argument("trainer.mode=self-distill requires trainer.teacher");
      }
      if (!std::filesystem::exists(config.teacher_path)) {
        throw std::runtime_error("missing teacher checkpoint: " + config.teacher_path);
      }
      const Checkpoint teacher = load_checkpoint(config.teacher_path);
      result = train_self_distill(config.trainer, data.train, data.val, teacher.params);
      break;
    }
  }

  write_metrics_csv(out_dir / "metrics.csv", result.metrics);
  write_evals_csv(out_dir / "evals.csv", result.metrics);
  save_checkpoint(out_dir / "checkpoint.bin", config.trainer.model, result.best_params);

  RunManifest m;
  m.experiment = config.name;
  m.status = "complete";
  m.config_echo = to_json(config);
  m.artifacts["metrics"] = "metrics.csv";
  m.artifacts["evals"] = "evals.csv";
  m.artifacts["checkpoint"] = "checkpoint.bin";
  m.artifacts["checkpoint-meta"] = "checkpoint.bin.meta.txt";
  const auto t1 = std::chrono::steady_clock::now();
  m.wall_clock_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  save_manifest(out_dir, m);
  return m;
}

struct SensitivityOptions {
  std::int64_t batches = 100;   // evaluation batch pool size
  double trim = 0.01;           // histogram-only top trim
  double sample = 0.10;         // histogram-only random sample
  int bins = 50;
  std::uint64_t seed = 17;      // batch pool + sampling seed
};

inline void check_model_match(const MlpConfig& a, const MlpConfig& b,
                              const std::string& what) {
  if (a.input_dim != b.input_dim || a.output_dim != b.output_dim ||
      a.hidden_dims != b.hidden_dims || a.task != b.task) {
    throw std::invalid_argument(what + ": checkpoint model does not match the config");
  }
}

inline void run_sensitivity(const ExperimentConfig& config,
                            const std::filesystem::path& checkpoint_path,
                            const std::filesystem::path& out_dir,
                            const SensitivityOptions& opts = {}) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  check_model_match(ck.config, config.trainer.model, "sensitivity");
  const DataSplits data = make_splits(config);
  const auto pool = sample_batch_pool(data.train, opts.seed, opts.batches,
                                      config.trainer.optim.batch_size);
  const SensitivityReport report =
      per_parameter_scores(ck.config, ck.params, pool);

  std::filesystem::create_directories(out_dir);
  write_scores_csv(out_dir / "sensitivity_scores.csv", report, ck.params);
  write_summary_txt(out_dir / "sensitivity_summary.txt", report);
  const auto sample =
      visualization_sample(report, opts.trim, opts.sample, opts.seed);
  write_histogram_csv(out_dir / "sensitivity_histogram.csv", sample, opts.bins);

  if (std::filesystem::exists(out_dir / "manifest.json")) {
    RunManifest m = load_manifest(out_dir);
    m.artifacts["sensitivity-scores"] = "sensitivity_scores.csv";
    m.artifacts["sensitivity-summary"] = "sensitivity_summary.txt";
    m.artifacts["sensitivity-histogram"] = "sensitivity_histogram.csv";
    save_manifest(out_dir, m);
  }
}

inline void run_sweep(const ExperimentConfig& config,
                      const std::filesystem::path& checkpoint_path,
                      const std::filesystem::path& report_path,
                      std::span<const double> ratios,
                      const std::filesystem::path& out_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  check_model_match(ck.config, config.trainer.model, "sweep");
  SensitivityReport report;
  report.scores = read_scores_csv(report_path);
  if (report.scores.size() != static_cast<std::size_t>(ck.params.total_count())) {
    throw std::invalid_argument(
        "report " + report_path.string() + " has " +
        std::to_string(report.scores.size()) + " scores but checkpoint has " +
        std::to_string(ck.params.total_count()) + " parameters");
  }
  const DataSplits data = make_splits(config);
  const PruneSweepResult sweep =
      prune_sweep(ck.config, ck.params, report, data.val, ratios, config.name);
  std::filesystem::create_directories(out_dir);
  write_sweep_csv(out_dir / "prune_sweep.csv", sweep);

  if (std::filesystem::exists(out_dir / "manifest.json")) {
    RunManifest m = load_manifest(out_dir);
    m.artifacts["prune-sweep"] = "prune_sweep.csv";
    save_manifest(out_dir, m);
  }
}

inline void run_schedule(double alpha, double p, double q, std::int64_t n,
                         std::int64_t samples, const std::filesystem::path& out_path) {
  if (!(q > p && p > 0.0)) {
    throw std::invalid_argument("sentinels must satisfy q > p > 0, got p = " +
                                std::to_string(p) + ", q = " + std::to_string(q));
  }
  if (samples < 1 || n < 1) {
    throw std::invalid_argument("schedule table needs n >= 1 and samples >= 1");
  }
  AlphaSchedule s{alpha, p, q, n};
  s.validate();
  std::string body = "step,alpha_prime\n";
  std::int64_t prev = -1;
  for (std::int64_t j = 0; j <= samples; ++j) {
    const auto x = static_cast<std::int64_t>(
        std::llround(static_cast<double>(j) * static_cast<double>(n) /
                     static_cast<double>(samples)));
    if (x == prev) continue;
    prev = x;
    body += std::to_string(x) + "," + format_g17(alpha_at(s, x)) + "\n";
  }
  write_text_file(out_path, body);
}

inline void run_compare(std::span<const std::string> run_dirs,
                        const std::filesystem::path& out_path) {
  if (run_dirs.size() < 2) {
    throw std::invalid_argument("compare needs at least 2 run directories");
  }
  std::vector<RunFiles> files;
  std::string first_task;
  for (const std::string& dir_str : run_dirs) {
    const std::filesystem::path dir(dir_str);
    const RunManifest m = load_manifest(dir);
    if (m.status != "complete") {
      throw std::runtime_error("run " + dir.string() + " is incomplete (status '" +
                               m.status + "')");
    }
    const std::string task = m.config_echo.at("task").get<std::string>();
    if (first_task.empty()) {
      first_task = task;
    } else if (task != first_task) {
      throw std::runtime_error("task mismatch: " + dir.string() + " ran '" + task +
                               "', expected '" + first_task + "'");
    }
    RunFiles rf;
    rf.label = m.experiment + " (" + dir.string() + ")";
    const auto artifact_path = [&](const char* key) -> std::optional<std::filesystem::path> {
      const auto it = m.artifacts.find(key);
      if (it == m.artifacts.end()) return std::nullopt;
      return dir / it->second;
    };
    const auto evals = artifact_path("evals");
    if (!evals) throw std::runtime_error("run " + dir.string() + " has no evals artifact");
    rf.evals_csv = *evals;
    rf.summary_txt = artifact_path("sensitivity-summary");
    rf.sweep_csv = artifact_path("prune-sweep");
    files.push_back(std::move(rf));
  }
  const RunComparison comparison = compare_runs(files);
  write_text_file(out_path, render_comparison(comparison));
}

}  // namespace intradist

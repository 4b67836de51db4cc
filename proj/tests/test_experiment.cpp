#include "support.hpp"

#include <cstdlib>

#include "intradist/checkpoint.hpp"
#include "intradist/experiment.hpp"

using namespace intradist;
using testsupport::fresh_temp_dir;

namespace {

nlohmann::json tiny_config_json() {
  return nlohmann::json::parse(R"({
    "experiment-name": "tiny",
    "task": "synthetic-classification",
    "dataset": { "train-samples": 200, "val-samples": 80, "dims": 5,
                 "classes": 3, "margin": 2.5, "seed": 31 },
    "model": { "hidden-dims": [8], "dropout-rate": 0.1 },
    "trainer": { "mode": "intra", "k-passes": 2, "steps": 60, "batch-size": 16,
                 "learning-rate": 0.05, "checkpoint-every": 20 },
    "schedule": { "alpha": 2.0, "sentinel-p": 5.0, "sentinel-q": 10.0 },
    "seeds": { "init": 1, "data": 2, "dropout": 3 }
  })");
}

std::filesystem::path write_tiny_config(const std::filesystem::path& dir,
                                        nlohmann::json j = tiny_config_json()) {
  const auto path = dir / "config.json";
  write_text_file(path, j.dump(2));
  return path;
}

// Metrics rows with the wall-clock column dropped.
std::vector<std::string> metrics_without_wall(const std::filesystem::path& path) {
  std::vector<std::string> rows;
  for (const auto& line : read_lines(path)) {
    const auto fields = split_line(line);
    std::string row;
    for (std::size_t i = 0; i + 1 < fields.size(); ++i) row += fields[i] + ",";
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("unknown config keys are rejected by name") {
  auto j = tiny_config_json();
  j["trainer"]["learning_rate"] = 0.1;  // underscored misspelling
  try {
    parse_experiment_config(j);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    REQUIRE(std::string(e.what()).find("trainer.learning_rate") != std::string::npos);
  }
  auto j2 = tiny_config_json();
  j2["extra"] = 1;
  REQUIRE_THROWS_AS(parse_experiment_config(j2), std::invalid_argument);
}

TEST_CASE("task-specific dataset keys are enforced") {
  auto j = tiny_config_json();
  j["dataset"]["target-noise"] = 0.1;
  REQUIRE_THROWS_AS(parse_experiment_config(j), std::invalid_argument);

  auto reg = tiny_config_json();
  reg["task"] = "synthetic-regression";
  reg["dataset"].erase("classes");
  reg["dataset"].erase("margin");
  reg["dataset"]["target-noise"] = 0.05;
  reg["trainer"]["mode"] = "standard";
  REQUIRE_NOTHROW(parse_experiment_config(reg));
}

TEST_CASE("config round-trips through serialization") {
  const auto parsed = parse_experiment_config(tiny_config_json());
  const auto again = parse_experiment_config(to_json(parsed));
  REQUIRE(to_json(parsed) == to_json(again));
  REQUIRE(again.trainer.schedule.alpha == 2.0);
  REQUIRE(again.trainer.k_passes == 2);
  REQUIRE(again.dims == 5);
}

TEST_CASE("overrides resolve dotted paths and unique bare keys") {
  auto j = tiny_config_json();
  apply_override(j, "alpha=0");  // unique bare key -> schedule.alpha
  REQUIRE(j["schedule"]["alpha"] == 0);
  apply_override(j, "trainer.mode=standard");
  REQUIRE(j["trainer"]["mode"] == "standard");
  apply_override(j, "hidden-dims=[4,4]");
  REQUIRE(j["model"]["hidden-dims"] == nlohmann::json::parse("[4,4]"));

  REQUIRE_THROWS_AS(apply_override(j, "not-an-assignment"), std::invalid_argument);

  // Unknown bare keys stay put and strict parsing reports them.
  apply_override(j, "bogus=1");
  REQUIRE_THROWS_AS(parse_experiment_config(j), std::invalid_argument);
}

TEST_CASE("run_train produces a complete manifest with existing artifacts") {
  const auto dir = fresh_temp_dir("train");
  const auto config = parse_experiment_config(tiny_config_json());
  const RunManifest m = run_train(config, dir);
  REQUIRE(m.status == "complete");
  for (const auto& [name, rel] : m.artifacts) {
    REQUIRE(std::filesystem::exists(dir / rel));
  }
  const Checkpoint ck = load_checkpoint(dir / m.artifacts.at("checkpoint"));
  REQUIRE(ck.params.total_count() == config.trainer.model.parameter_count());
  const RunManifest loaded = load_manifest(dir);
  REQUIRE(loaded.experiment == "tiny");
  std::filesystem::remove_all(dir);
}

TEST_CASE("reruns are byte-identical apart from wall-clock fields") {
  const auto dir1 = fresh_temp_dir("rerun1");
  const auto dir2 = fresh_temp_dir("rerun2");
  const auto config = parse_experiment_config(tiny_config_json());
  run_train(config, dir1);
  run_train(config, dir2);
  REQUIRE(metrics_without_wall(dir1 / "metrics.csv") ==
          metrics_without_wall(dir2 / "metrics.csv"));
  REQUIRE(read_text_file(dir1 / "evals.csv") == read_text_file(dir2 / "evals.csv"));
  REQUIRE(read_text_file(dir1 / "checkpoint.bin") ==
          read_text_file(dir2 / "checkpoint.bin"));
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("alpha override zero makes the recorded alpha column all zeros") {
  const auto dir = fresh_temp_dir("alpha0");
  auto j = tiny_config_json();
  apply_override(j, "alpha=0");
  const auto config = parse_experiment_config(j);
  run_train(config, dir);
  const auto rows = read_metrics_csv(dir / "metrics.csv");
  for (const auto& r : rows) REQUIRE(r.alpha_prime == 0.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("schedule table hits the reference anchors") {
  const auto dir = fresh_temp_dir("sched");
  run_schedule(5.0, 5.0, 10.0, 50000, 10, dir / "schedule.csv");
  const auto lines = read_lines(dir / "schedule.csv");
  REQUIRE(lines.size() == 12);  // header + 11 sampled points
  bool saw_5000 = false, saw_10000 = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_line(lines[i]);
    const auto x = std::stoll(f[0]);
    const double a = std::stod(f[1]);
    if (x == 5000) {
      saw_5000 = true;
      REQUIRE(a == Catch::Approx(1.0).margin(5e-3));
    }
    if (x == 10000) {
      saw_10000 = true;
      REQUIRE(a == 5.0);
    }
  }
  REQUIRE(saw_5000);
  REQUIRE(saw_10000);
  REQUIRE_THROWS_AS(run_schedule(5.0, 10.0, 5.0, 1000, 10, dir / "bad.csv"),
                    std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("alpha at most one gives a constant schedule table") {
  const auto dir = fresh_temp_dir("sched_const");
  run_schedule(0.5, 5.0, 10.0, 1000, 5, dir / "schedule.csv");
  const auto lines = read_lines(dir / "schedule.csv");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    REQUIRE(std::stod(split_line(lines[i])[1]) == 0.5);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("sensitivity and sweep commands compose over a run directory") {
  const auto dir = fresh_temp_dir("pipeline");
  const auto config = parse_experiment_config(tiny_config_json());
  run_train(config, dir);

  SensitivityOptions opts;
  opts.batches = 20;
  opts.trim = 0.0;
  opts.sample = 1.0;
  opts.bins = 10;
  run_sensitivity(config, dir / "checkpoint.bin", dir, opts);
  const auto scores = read_scores_csv(dir / "sensitivity_scores.csv");
  REQUIRE(scores.size() ==
          static_cast<std::size_t>(config.trainer.model.parameter_count()));

  // Histogram counts sum to the parameter count when nothing is trimmed.
  std::int64_t total = 0;
  const auto hist = read_lines(dir / "sensitivity_histogram.csv");
  for (std::size_t i = 1; i < hist.size(); ++i)
    total += std::stoll(split_line(hist[i])[2]);
  REQUIRE(total == config.trainer.model.parameter_count());

  const std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  run_sweep(config, dir / "checkpoint.bin", dir / "sensitivity_scores.csv", ratios, dir);
  const auto sweep = read_sweep_csv(dir / "prune_sweep.csv");
  REQUIRE(sweep.ratios.size() == 10);

  // Ratio-zero row equals a plain evaluation of the checkpoint.
  const Checkpoint ck = load_checkpoint(dir / "checkpoint.bin");
  const DataSplits data = make_splits(config);
  const EvalResult plain = evaluate(ck.config, ck.params, data.val);
  REQUIRE(sweep.metric_at_ratio[0] == plain.metric);

  const std::vector<double> unsorted{0.0, 0.5, 0.3};
  REQUIRE_THROWS_AS(run_sweep(config, dir / "checkpoint.bin",
                              dir / "sensitivity_scores.csv", unsorted, dir),
                    std::invalid_argument);

  // The manifest now lists the new artifacts.
  const RunManifest m = load_manifest(dir);
  REQUIRE(m.artifacts.count("sensitivity-scores") == 1);
  REQUIRE(m.artifacts.count("prune-sweep") == 1);

  const auto cmp_dir = fresh_temp_dir("cmp_out");
  const std::vector<std::string> dirs{dir.string(), dir.string()};
  run_compare(dirs, cmp_dir / "comparison.txt");
  const std::string cmp = read_text_file(cmp_dir / "comparison.txt");
  REQUIRE(cmp.find("tiny") != std::string::npos);
  REQUIRE(cmp.find("n/a") == std::string::npos);  // both sides fully populated

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(cmp_dir);
}

TEST_CASE("sensitivity reruns with one seed are byte-identical") {
  const auto dir = fresh_temp_dir("sens_rerun");
  const auto config = parse_experiment_config(tiny_config_json());
  run_train(config, dir);
  SensitivityOptions opts;
  opts.batches = 10;
  run_sensitivity(config, dir / "checkpoint.bin", dir, opts);
  const std::string first = read_text_file(dir / "sensitivity_scores.csv");
  const std::string first_hist = read_text_file(dir / "sensitivity_histogram.csv");
  run_sensitivity(config, dir / "checkpoint.bin", dir, opts);
  REQUIRE(read_text_file(dir / "sensitivity_scores.csv") == first);
  REQUIRE(read_text_file(dir / "sensitivity_histogram.csv") == first_hist);
  std::filesystem::remove_all(dir);
}

TEST_CASE("an all-zero checkpoint yields all-zero scores and zero std") {
  const auto dir = fresh_temp_dir("sens_zero");
  const auto config = parse_experiment_config(tiny_config_json());
  ParameterVector zeros;
  const MlpConfig& mc = config.trainer.model;
  for (std::size_t l = 0; l < mc.layer_count(); ++l) {
    const auto [in, out] = mc.layer_dims(l);
    zeros.segments.push_back({"layer" + std::to_string(l) + ".weight",
                              Tensor::zeros({in, out})});
    zeros.segments.push_back(
        {"layer" + std::to_string(l) + ".bias", Tensor::zeros({out})});
  }
  save_checkpoint(dir / "zero.bin", mc, zeros);
  SensitivityOptions opts;
  opts.batches = 5;
  run_sensitivity(config, dir / "zero.bin", dir, opts);
  for (double s : read_scores_csv(dir / "sensitivity_scores.csv")) REQUIRE(s == 0.0);
  REQUIRE(read_summary_field(dir / "sensitivity_summary.txt", "std") == 0.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("compare requires complete manifests and matching tasks") {
  const auto dir = fresh_temp_dir("cmp_err");
  const std::vector<std::string> dirs{(dir / "missing").string(),
                                      (dir / "missing").string()};
  try {
    run_compare(dirs, dir / "out.txt");
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    REQUIRE(std::string(e.what()).find("manifest") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("cli binary runs end to end with exit codes") {
  const auto dir = fresh_temp_dir("cli");
  const auto config_path = write_tiny_config(dir);
  const std::string cli = INTRADIST_CLI_PATH;

  const std::string ok_cmd = cli + " train --config " + config_path.string() +
                             " --out " + (dir / "run").string() + " >/dev/null 2>&1";
  REQUIRE(std::system(ok_cmd.c_str()) == 0);
  REQUIRE(std::filesystem::exists(dir / "run" / "manifest.json"));

  const std::string bad_cmd = cli + " train --config " + (dir / "nope.json").string() +
                              " --out " + (dir / "run2").string() + " 2> " +
                              (dir / "err.txt").string() + " >/dev/null";
  REQUIRE(std::system(bad_cmd.c_str()) != 0);
  const auto err_lines = read_lines(dir / "err.txt");
  REQUIRE(err_lines.size() == 1);
  REQUIRE(err_lines[0].rfind("error:", 0) == 0);

  // Override propagates through the CLI surface.
  const std::string override_cmd =
      cli + " train --config " + config_path.string() + " --set alpha=0 --out " +
      (dir / "run3").string() + " >/dev/null 2>&1";
  REQUIRE(std::system(override_cmd.c_str()) == 0);
  for (const auto& row : read_metrics_csv(dir / "run3" / "metrics.csv")) {
    REQUIRE(row.alpha_prime == 0.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("bundled configs parse") {
  const std::filesystem::path configs = INTRADIST_CONFIG_DIR;
  for (const char* name : {"toy_classification_baseline.json",
                           "toy_classification_intra.json", "toy_regression.json"}) {
    const auto parsed = load_config_file(configs / name);
    REQUIRE(!parsed.name.empty());
  }
}

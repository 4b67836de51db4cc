// Command-line driver: train / sensitivity / sweep / schedule / compare.
// Exits 0 on success, 1 with a single-line diagnostic on failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "intradist/experiment.hpp"

namespace fs = std::filesystem;
using namespace intradist;

namespace {

std::vector<double> parse_ratio_list(const std::string& csv) {
  std::vector<double> ratios;
  for (const std::string& field : split_line(csv)) {
    if (field.empty()) throw std::invalid_argument("empty entry in ratio list");
    ratios.push_back(std::stod(field));
  }
  return ratios;
}

fs::path resolve_out_dir(const std::string& out_flag, const ExperimentConfig& config) {
  if (!out_flag.empty()) return out_flag;
  if (!config.output_dir.empty()) return config.output_dir;
  throw std::invalid_argument("no output directory: pass --out or set 'output' in the config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intra-distillation training and sensitivity analysis lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path, report_path, ratios_csv;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  auto add_config_flags = [&](CLI::App* cmd, bool config_required = true) {
    auto* c = cmd->add_option("--config", config_path, "experiment config file (JSON)");
    if (config_required) c->required();
    cmd->add_option("--out", out_dir, "output directory (overrides config 'output')");
    cmd->add_option("--seed", seed,
                    "master seed: sets seeds.init/data/dropout to N, N+1, N+2");
    cmd->add_option("--set", overrides,
                    "config override key=value (repeatable; dotted or unique bare key)");
  };

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from a config");
  add_config_flags(train_cmd);
  train_cmd->callback([&] {
    const ExperimentConfig config = load_config_file(config_path, overrides, seed);
    const fs::path dir = resolve_out_dir(out_dir, config);
    run_train(config, dir);
    std::cout << "run complete: " << (dir / "manifest.json").string() << "\n";
  });

  // sensitivity
  SensitivityOptions sens;
  auto* sens_cmd =
      app.add_subcommand("sensitivity", "per-parameter sensitivity report");
  add_config_flags(sens_cmd);
  sens_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  sens_cmd->add_option("--batches", sens.batches, "evaluation batch pool size");
  sens_cmd->add_option("--trim", sens.trim, "top trim fraction (histogram only)");
  sens_cmd->add_option("--sample", sens.sample, "random sample fraction (histogram only)");
  sens_cmd->add_option("--bins", sens.bins, "histogram bin count");
  sens_cmd->callback([&] {
    const ExperimentConfig config = load_config_file(config_path, overrides, seed);
    if (seed) sens.seed = *seed;
    const fs::path dir = resolve_out_dir(out_dir, config);
    run_sensitivity(config, checkpoint_path, dir, sens);
    std::cout << "sensitivity report: " << (dir / "sensitivity_scores.csv").string()
              << "\n";
  });

  // sweep
  auto* sweep_cmd =
      app.add_subcommand("sweep", "sensitivity-ordered one-shot pruning sweep");
  add_config_flags(sweep_cmd);
  sweep_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  sweep_cmd->add_option("--report", report_path, "sensitivity scores file")->required();
  sweep_cmd->add_option("--ratios", ratios_csv, "comma-separated prune ratios")
      ->required();
  sweep_cmd->callback([&] {
    const ExperimentConfig config = load_config_file(config_path, overrides, seed);
    const fs::path dir = resolve_out_dir(out_dir, config);
    const auto ratios = parse_ratio_list(ratios_csv);
    run_sweep(config, checkpoint_path, report_path, ratios, dir);
    std::cout << "sweep: " << (dir / "prune_sweep.csv").string() << "\n";
  });

  // schedule
  double alpha = 5.0, sentinel_p = 5.0, sentinel_q = 10.0;
  std::int64_t total_steps = 50000, samples = 100;
  std::string schedule_out = "schedule.csv";
  auto* sched_cmd = app.add_subcommand("schedule", "tabulate the adaptive strength curve");
  sched_cmd->add_option("--alpha", alpha, "target strength");
  sched_cmd->add_option("--sentinel-p", sentinel_p, "lower sentinel (q > p > 0)");
  sched_cmd->add_option("--sentinel-q", sentinel_q, "upper sentinel");
  sched_cmd->add_option("--total-steps", total_steps, "total training steps N");
  sched_cmd->add_option("--samples", samples, "number of sampled points");
  sched_cmd->add_option("--out", schedule_out, "output table file");
  sched_cmd->callback([&] {
    run_schedule(alpha, sentinel_p, sentinel_q, total_steps, samples, schedule_out);
    std::cout << "schedule table: " << schedule_out << "\n";
  });

  // compare
  std::vector<std::string> run_dirs;
  std::string compare_out = "comparison.txt";
  auto* cmp_cmd = app.add_subcommand("compare", "compare completed run directories");
  cmp_cmd->add_option("dirs", run_dirs, "run directories (>= 2)")->expected(-2);
  cmp_cmd->add_option("--out", compare_out, "output summary file");
  cmp_cmd->callback([&] {
    run_compare(run_dirs, compare_out);
    std::cout << "comparison: " << compare_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// Post-training studies: sensitivity-ordered one-shot pruning sweeps and
// run-to-run comparisons.
//
// Pruning is one-shot from the original parameters, never cumulative: the
// selection at a higher ratio is a superset of the selection at a lower one,
// and ties in scores break toward the lower flat index so results are
// reproducible.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "intradist/data.hpp"
#include "intradist/io.hpp"
#include "intradist/model.hpp"
#include "intradist/sensitivity.hpp"
#include "intradist/trainer.hpp"

namespace intradist {

// Flat indices of the floor(ratio * total) lowest-scoring parameters.
inline ParameterSubset lowest_indices(const SensitivityReport& report, double ratio,
                                      std::int64_t total) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("prune ratio must be in [0, 1], got " +
                                std::to_string(ratio));
  }
  if (report.scores.size() != static_cast<std::size_t>(total)) {
    throw std::invalid_argument("report has " + std::to_string(report.scores.size()) +
                                " scores for " + std::to_string(total) + " parameters");
  }
  const auto count = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(total)));
  std::vector<std::int64_t> order(static_cast<std::size_t>(total));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return report.scores[static_cast<std::size_t>(a)] <
           report.scores[static_cast<std::size_t>(b)];
  });
  order.resize(count);
  return ParameterSubset::of(std::move(order), total);
}

inline ParameterVector prune_lowest(const ParameterVector& params,
                                    const SensitivityReport& report, double ratio) {
  return zero_out(params, lowest_indices(report, ratio, params.total_count()));
}

struct PruneSweepResult {
  std::string model_tag;
  std::vector<double> ratios;
  std::vector<double> metric_at_ratio;
  std::vector<double> loss_at_ratio;
  std::vector<double> metric_drop;  // metric at 0 minus metric at ratio

  double drop_at(double ratio) const {
    for (std::size_t i = 0; i < ratios.size(); ++i)
      if (ratios[i] == ratio) return metric_drop[i];
    throw std::invalid_argument("sweep has no ratio " + std::to_string(ratio));
  }
};

inline void validate_sweep_ratios(std::span<const double> ratios) {
  if (ratios.empty()) throw std::invalid_argument("ratio list is empty");
  if (ratios[0] != 0.0) throw std::invalid_argument("ratio list must start at 0");
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] >= 0.0 && ratios[i] <= 1.0)) {
      throw std::invalid_argument("prune ratio must be in [0, 1], got " +
                                  std::to_string(ratios[i]));
    }
    if (i > 0 && ratios[i] <= ratios[i - 1]) {
      throw std::invalid_argument("ratio list must be strictly increasing");
    }
  }
}

inline PruneSweepResult prune_sweep(const MlpConfig& config,
                                    const ParameterVector& params,
                                    const SensitivityReport& report,
                                    const Dataset& data, std::span<const double> ratios,
                                    std::string model_tag = {}) {
  validate_sweep_ratios(ratios);
  PruneSweepResult result;
  result.model_tag = std::move(model_tag);
  result.ratios.assign(ratios.begin(), ratios.end());
  for (double ratio : ratios) {
    const ParameterVector pruned = prune_lowest(params, report, ratio);
    const EvalResult ev = evaluate(config, pruned, data);
    result.metric_at_ratio.push_back(ev.metric);
    result.loss_at_ratio.push_back(ev.loss);
  }
  for (double m : result.metric_at_ratio)
    result.metric_drop.push_back(result.metric_at_ratio[0] - m);
  return result;
}

inline constexpr const char* kSweepHeader = "ratio,metric,metric_drop,loss";

inline void write_sweep_csv(const std::filesystem::path& path,
                            const PruneSweepResult& result) {
  std::string body = "# model-tag " + result.model_tag + "\n";
  body += std::string(kSweepHeader) + "\n";
  for (std::size_t i = 0; i < result.ratios.size(); ++i) {
    body += format_g17(result.ratios[i]) + "," + format_g17(result.metric_at_ratio[i]) +
            "," + format_g17(result.metric_drop[i]) + "," +
            format_g17(result.loss_at_ratio[i]) + "\n";
  }
  write_text_file(path, body);
}

inline PruneSweepResult read_sweep_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::size_t start = 0;
  PruneSweepResult result;
  if (!lines.empty() && lines[0].rfind("# model-tag", 0) == 0) {
    result.model_tag = lines[0].size() > 12 ? lines[0].substr(12) : "";
    start = 1;
  }
  if (start >= lines.size() || lines[start] != kSweepHeader) {
    throw std::runtime_error("bad sweep file header in " + path.string());
  }
  for (std::size_t i = start + 1; i < lines.size(); ++i) {
    const auto f = split_line(lines[i]);
    if (f.size() != 4) throw std::runtime_error("bad sweep row in " + path.string());
    result.ratios.push_back(std::stod(f[0]));
    result.metric_at_ratio.push_back(std::stod(f[1]));
    result.metric_drop.push_back(std::stod(f[2]));
    result.loss_at_ratio.push_back(std::stod(f[3]));
  }
  return result;
}

// --- run comparison -----------------------------------------------------------

// The files a completed run directory can contribute to a comparison.
struct RunFiles {
  std::string label;
  std::filesystem::path evals_csv;
  std::optional<std::filesystem::path> summary_txt;  // sensitivity summary
  std::optional<std::filesystem::path> sweep_csv;
};

struct RunSummary {
  std::string label;
  std::int64_t best_step = 0;
  double best_val_loss = 0.0;
  double best_val_metric = 0.0;
  std::optional<double> balance_std;
  std::optional<double> sweep_drop_half;
};

inline RunSummary load_run_summary(const RunFiles& files) {
  RunSummary s;
  s.label = files.label;
  const auto evals = read_evals_csv(files.evals_csv);
  if (evals.empty()) throw std::runtime_error("no rows in " + files.evals_csv.string());
  std::size_t best = 0;
  for (std::size_t i = 1; i < evals.size(); ++i)
    if (evals[i].loss < evals[best].loss) best = i;
  s.best_step = evals[best].step;
  s.best_val_loss = evals[best].loss;
  s.best_val_metric = evals[best].metric;
  if (files.summary_txt) s.balance_std = read_summary_field(*files.summary_txt, "std");
  if (files.sweep_csv) {
    const auto sweep = read_sweep_csv(*files.sweep_csv);
    for (std::size_t i = 0; i < sweep.ratios.size(); ++i)
      if (sweep.ratios[i] == 0.5) s.sweep_drop_half = sweep.metric_drop[i];
  }
  return s;
}

struct RunComparison {
  std::vector<RunSummary> runs;  // deltas are taken against runs[0]
};

inline RunComparison compare_runs(std::span<const RunFiles> runs) {
  if (runs.size() < 2) {
    throw std::invalid_argument("comparison needs at least 2 runs, got " +
                                std::to_string(runs.size()));
  }
  RunComparison c;
  for (const RunFiles& rf : runs) c.runs.push_back(load_run_summary(rf));
  return c;
}

inline std::string render_comparison(const RunComparison& c) {
  std::string out = "# run comparison (deltas and ratios are against the first run)\n";
  out += "label,best_step,val_loss,val_metric,balance_std,sweep_drop_0.5,"
         "delta_val_metric,std_ratio\n";
  const RunSummary& base = c.runs[0];
  for (const RunSummary& r : c.runs) {
    out += r.label + "," + std::to_string(r.best_step) + "," +
           format_g17(r.best_val_loss) + "," + format_g17(r.best_val_metric) + ",";
    out += r.balance_std ? format_g17(*r.balance_std) : std::string("n/a");
    out += ",";
    out += r.sweep_drop_half ? format_g17(*r.sweep_drop_half) : std::string("n/a");
    out += "," + format_g17(r.best_val_metric - base.best_val_metric) + ",";
    if (r.balance_std && base.balance_std && *base.balance_std != 0.0) {
      out += format_g17(*r.balance_std / *base.balance_std);
    } else if (r.balance_std && base.balance_std) {
      out += format_g17(*r.balance_std == 0.0 ? 1.0 : INFINITY);
    } else {
      out += "n/a";
    }
    out += "\n";
  }
  return out;
}

}  // namespace intradist

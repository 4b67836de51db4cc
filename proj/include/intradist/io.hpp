// Text export/import for metrics, sensitivity reports, histograms, and prune
// sweeps. Every number is rendered with 17 significant digits so files are
// bit-stable across platforms and round-trip exactly.
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "intradist/model.hpp"
#include "intradist/sensitivity.hpp"
#include "intradist/trainer.hpp"

namespace intradist {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << body;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_line(const std::string& line, char sep = ',') {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

// --- per-step metrics stream ------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "step,task_loss_mean,intra_loss,alpha_prime,wall_ms";

inline void write_metrics_csv(const std::filesystem::path& path,
                              const TrainMetrics& metrics) {
  std::string body = std::string(kMetricsHeader) + "\n";
  for (const StepRecord& r : metrics.steps) {
    body += std::to_string(r.step) + "," + format_g17(r.task_loss_mean) + "," +
            format_g17(r.intra_loss) + "," + format_g17(r.alpha_prime) + "," +
            format_g17(r.wall_ms) + "\n";
  }
  write_text_file(path, body);
}

inline std::vector<StepRecord> read_metrics_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != kMetricsHeader) {
    throw std::runtime_error("bad metrics file header in " + path.string());
  }
  std::vector<StepRecord> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_line(lines[i]);
    if (f.size() != 5) throw std::runtime_error("bad metrics row in " + path.string());
    rows.push_back({std::stoll(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]),
                    std::stod(f[4])});
  }
  return rows;
}

// --- validation checkpoints ---------------------------------------------------

inline constexpr const char* kEvalsHeader = "step,val_loss,val_metric";

inline void write_evals_csv(const std::filesystem::path& path,
                            const TrainMetrics& metrics) {
  std::string body = std::string(kEvalsHeader) + "\n";
  for (const EvalRecord& r : metrics.evals) {
    body += std::to_string(r.step) + "," + format_g17(r.loss) + "," +
            format_g17(r.metric) + "\n";
  }
  write_text_file(path, body);
}

inline std::vector<EvalRecord> read_evals_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != kEvalsHeader) {
    throw std::runtime_error("bad evals file header in " + path.string());
  }
  std::vector<EvalRecord> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_line(lines[i]);
    if (f.size() != 3) throw std::runtime_error("bad evals row in " + path.string());
    rows.push_back({std::stoll(f[0]), std::stod(f[1]), std::stod(f[2])});
  }
  return rows;
}

// --- sensitivity exports ------------------------------------------------------

inline constexpr const char* kScoresHeader = "flat_index,layer_name,score";

inline void write_scores_csv(const std::filesystem::path& path,
                             const SensitivityReport& report,
                             const ParameterVector& params) {
  if (report.scores.size() != static_cast<std::size_t>(params.total_count())) {
    throw std::invalid_argument("report has " + std::to_string(report.scores.size()) +
                                " scores for " + std::to_string(params.total_count()) +
                                " parameters");
  }
  std::string body = std::string(kScoresHeader) + "\n";
  std::int64_t flat = 0;
  for (const auto& seg : params.segments) {
    for (std::int64_t i = 0; i < seg.tensor.numel(); ++i, ++flat) {
      body += std::to_string(flat) + "," + seg.name + "," +
              format_g17(report.scores[static_cast<std::size_t>(flat)]) + "\n";
    }
  }
  write_text_file(path, body);
}

inline std::vector<double> read_scores_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != kScoresHeader) {
    throw std::runtime_error("bad scores file header in " + path.string());
  }
  std::vector<double> scores;
  scores.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_line(lines[i]);
    if (f.size() != 3) throw std::runtime_error("bad scores row in " + path.string());
    if (std::stoll(f[0]) != static_cast<std::int64_t>(scores.size())) {
      throw std::runtime_error("non-contiguous flat indices in " + path.string());
    }
    scores.push_back(std::stod(f[2]));
  }
  return scores;
}

inline void write_summary_txt(const std::filesystem::path& path,
                              const SensitivityReport& report) {
  const SensitivitySummary& s = report.summary;
  std::string body;
  body += "count " + std::to_string(report.scores.size()) + "\n";
  body += "batch-count " + std::to_string(report.batch_count) + "\n";
  body += "trim-fraction " + format_g17(report.trim_fraction) + "\n";
  body += "mean " + format_g17(s.mean) + "\n";
  body += "std " + format_g17(s.stddev) + "\n";
  body += "p1 " + format_g17(s.p1) + "\n";
  body += "p5 " + format_g17(s.p5) + "\n";
  body += "p25 " + format_g17(s.p25) + "\n";
  body += "p50 " + format_g17(s.p50) + "\n";
  body += "p75 " + format_g17(s.p75) + "\n";
  body += "p95 " + format_g17(s.p95) + "\n";
  body += "p99 " + format_g17(s.p99) + "\n";
  body += "top-fraction " + format_g17(s.top_fraction) + "\n";
  body += "top-share " + format_g17(s.top_share) + "\n";
  write_text_file(path, body);
}

inline double read_summary_field(const std::filesystem::path& path,
                                 const std::string& key) {
  for (const std::string& line : read_lines(path)) {
    const auto sp = line.find(' ');
    if (sp != std::string::npos && line.substr(0, sp) == key) {
      return std::stod(line.substr(sp + 1));
    }
  }
  throw std::runtime_error("field '" + key + "' not found in " + path.string());
}

inline constexpr const char* kHistogramHeader = "bin_left,bin_right,count";

inline void write_histogram_csv(const std::filesystem::path& path,
                                std::span<const double> values, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs bins >= 1");
  std::string body = std::string(kHistogramHeader) + "\n";
  if (values.empty()) {
    write_text_file(path, body);
    return;
  }
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) {
    body += format_g17(lo) + "," + format_g17(hi) + "," +
            std::to_string(values.size()) + "\n";
    write_text_file(path, body);
    return;
  }
  std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    auto idx = static_cast<std::int64_t>((v - lo) / width);
    idx = std::min<std::int64_t>(idx, bins - 1);
    ++counts[static_cast<std::size_t>(idx)];
  }
  for (int b = 0; b < bins; ++b) {
    body += format_g17(lo + width * b) + "," + format_g17(lo + width * (b + 1)) + "," +
            std::to_string(counts[static_cast<std::size_t>(b)]) + "\n";
  }
  write_text_file(path, body);
}

}  // namespace intradist

// Parameter sensitivity: exact (loss change under zeroing) and first-order
// (|theta * gradient|), per-parameter score reports, and the
// contribution-balance statistic (population std of all scores).
//
// Measurement runs in evaluation mode (no dropout) against the plain task
// loss, with gradients averaged over a fixed pool of batches.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "intradist/data.hpp"
#include "intradist/model.hpp"
#include "intradist/objective.hpp"
#include "intradist/tensor.hpp"

namespace intradist {

struct SensitivitySummary {
  double mean = 0.0;
  double stddev = 0.0;  // population form
  double p1 = 0.0, p5 = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p95 = 0.0, p99 = 0.0;
  double top_fraction = 0.2;
  double top_share = 0.0;  // share of total score mass held by the top fraction
};

struct SensitivityReport {
  std::vector<double> scores;  // aligned to flat indices, always full length
  std::int64_t batch_count = 0;
  double trim_fraction = 0.0;  // > 0 marks a visualization-flagged report
  SensitivitySummary summary;
};

namespace detail {

// Percentile with linear interpolation between order statistics.
inline double percentile(const std::vector<double>& sorted, double pct) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  const double rank = pct / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double population_std(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace detail

// Multiset with the top floor(trim * n) highest scores removed. No
// re-normalization happens afterwards.
inline std::vector<double> trimmed_scores(std::span<const double> scores,
                                          double trim_fraction) {
  if (!(trim_fraction >= 0.0 && trim_fraction < 1.0)) {
    throw std::invalid_argument("trim fraction must be in [0, 1)");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto drop = static_cast<std::size_t>(
      std::floor(trim_fraction * static_cast<double>(sorted.size())));
  sorted.resize(sorted.size() - drop);
  return sorted;
}

inline SensitivitySummary summarize_scores(std::span<const double> scores,
                                           double top_fraction = 0.2) {
  SensitivitySummary s;
  s.top_fraction = top_fraction;
  if (scores.empty()) return s;
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double x : sorted) total += x;
  s.mean = total / static_cast<double>(sorted.size());
  s.stddev = detail::population_std(sorted);
  s.p1 = detail::percentile(sorted, 1);
  s.p5 = detail::percentile(sorted, 5);
  s.p25 = detail::percentile(sorted, 25);
  s.p50 = detail::percentile(sorted, 50);
  s.p75 = detail::percentile(sorted, 75);
  s.p95 = detail::percentile(sorted, 95);
  s.p99 = detail::percentile(sorted, 99);
  const auto top = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(top_fraction * static_cast<double>(sorted.size()))));
  double top_sum = 0.0;
  for (std::size_t i = sorted.size() - std::min(top, sorted.size()); i < sorted.size(); ++i)
    top_sum += sorted[i];
  s.top_share = total > 0.0 ? top_sum / total : 0.0;
  return s;
}

inline SensitivityReport make_report(std::vector<double> scores,
                                     std::int64_t batch_count, double trim_fraction) {
  SensitivityReport r;
  r.batch_count = batch_count;
  r.trim_fraction = trim_fraction;
  if (trim_fraction > 0.0) {
    const auto trimmed = trimmed_scores(scores, trim_fraction);
    r.summary = summarize_scores(trimmed);
  } else {
    r.summary = summarize_scores(scores);
  }
  r.scores = std::move(scores);
  return r;
}

// Mean task loss over the batch pool, evaluation mode.
inline double mean_task_loss(const MlpConfig& config, const ParameterVector& params,
                             std::span<const Batch> batches) {
  if (batches.empty()) throw std::invalid_argument("batch pool is empty");
  double total = 0.0;
  for (const Batch& b : batches) {
    const Tensor out = mlp_forward_eval(config, params, b.inputs);
    total += config.task == TaskKind::classification ? task_loss(out, b.labels)
                                                     : task_loss(out, b.targets);
  }
  return total / static_cast<double>(batches.size());
}

// Flat gradient of the mean task loss over the batch pool, evaluation mode.
inline std::vector<double> mean_task_gradient(const MlpConfig& config,
                                              const ParameterVector& params,
                                              std::span<const Batch> batches) {
  if (batches.empty()) throw std::invalid_argument("batch pool is empty");
  std::vector<double> grad(static_cast<std::size_t>(params.total_count()), 0.0);
  for (const Batch& b : batches) {
    Graph g;
    const auto values = bind_parameters(g, params);
    const Value out = mlp_forward(g, config, values, g.leaf(b.inputs));
    const Value loss = config.task == TaskKind::classification
                           ? nll_node(g, out, b.labels)
                           : mse_node(g, out, b.targets);
    const GradientTable grads = g.backward(loss);
    std::size_t cursor = 0;
    for (const Value v : values) {
      for (const double gv : grads.at(v).values) grad[cursor++] += gv;
    }
  }
  const double inv = 1.0 / static_cast<double>(batches.size());
  for (double& v : grad) v *= inv;
  return grad;
}

// |L(theta) - L(theta with subset zeroed)| over the batch pool.
inline double exact_sensitivity(const MlpConfig& config, const ParameterVector& params,
                                const ParameterSubset& subset,
                                std::span<const Batch> batches) {
  if (subset.empty()) throw std::invalid_argument("sensitivity subset is empty");
  const double base = mean_task_loss(config, params, batches);
  const double zeroed = mean_task_loss(config, zero_out(params, subset), batches);
  return std::abs(base - zeroed);
}

// First-order approximation |sum_{i in subset} theta_i * g_i|.
inline double approx_sensitivity(const ParameterVector& params,
                                 std::span<const double> flat_gradient,
                                 const ParameterSubset& subset) {
  if (flat_gradient.size() != static_cast<std::size_t>(params.total_count())) {
    throw std::invalid_argument("gradient length " + std::to_string(flat_gradient.size()) +
                                " does not match parameter count " +
                                std::to_string(params.total_count()));
  }
  double s = 0.0;
  for (std::int64_t idx : subset.indices)
    s += params.get(idx) * flat_gradient[static_cast<std::size_t>(idx)];
  return std::abs(s);
}

// Per-parameter scores |theta_i * gbar_i| with gbar the gradient of the mean
// task loss over the pool.
inline SensitivityReport per_parameter_scores(const MlpConfig& config,
                                              const ParameterVector& params,
                                              std::span<const Batch> batches,
                                              double trim_fraction = 0.0) {
  const auto grad = mean_task_gradient(config, params, batches);
  const auto theta = params.flatten();
  std::vector<double> scores(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) scores[i] = std::abs(theta[i] * grad[i]);
  return make_report(std::move(scores), static_cast<std::int64_t>(batches.size()),
                     trim_fraction);
}

// Degree of contribution balance: population std of the scores, over the
// trimmed multiset when the report is visualization-flagged.
inline double balance_std(const SensitivityReport& report) {
  if (report.trim_fraction > 0.0) {
    const auto trimmed = trimmed_scores(report.scores, report.trim_fraction);
    return detail::population_std(trimmed);
  }
  return detail::population_std(report.scores);
}

struct TopBottomPoint {
  double top_mean = 0.0;
  double bottom_mean = 0.0;
};

// Mean score of the current top `fraction` of parameters vs the rest, with
// membership re-ranked at every checkpoint. Ties break toward the lower flat
// index landing in the top set.
inline std::vector<TopBottomPoint> top_bottom_track(
    std::span<const SensitivityReport> history, double fraction = 0.2) {
  if (history.empty()) throw std::invalid_argument("report history is empty");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("fraction must be in (0, 1]");
  }
  std::vector<TopBottomPoint> series;
  series.reserve(history.size());
  for (const SensitivityReport& r : history) {
    const std::size_t n = r.scores.size();
    if (n == 0) throw std::invalid_argument("report has no scores");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return r.scores[a] > r.scores[b];
    });
    const std::size_t top = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
    TopBottomPoint pt;
    for (std::size_t i = 0; i < top; ++i) pt.top_mean += r.scores[order[i]];
    pt.top_mean /= static_cast<double>(top);
    if (top < n) {
      for (std::size_t i = top; i < n; ++i) pt.bottom_mean += r.scores[order[i]];
      pt.bottom_mean /= static_cast<double>(n - top);
    }
    series.push_back(pt);
  }
  return series;
}

// Seeded visualization multiset: trim the top, then keep a random sample of
// the stated fraction (at least one element).
inline std::vector<double> visualization_sample(const SensitivityReport& report,
                                                double trim_fraction,
                                                double sample_fraction,
                                                std::uint64_t seed) {
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw std::invalid_argument("sample fraction must be in (0, 1]");
  }
  auto kept = trimmed_scores(report.scores, trim_fraction);
  if (sample_fraction >= 1.0) return kept;
  const auto want = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(sample_fraction * static_cast<double>(kept.size()))));
  RngStream rng(seed, 0);
  // Partial Fisher-Yates: the first `want` slots are an unbiased sample.
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.next_index(kept.size() - i));
    std::swap(kept[i], kept[j]);
  }
  kept.resize(want);
  return kept;
}

}  // namespace intradist

// Divergences and loss assemblies.
//
// Plain functions operate on probability arrays and are used for reporting
// and property checks; the *_node functions record the same quantities on a
// Graph so they can be differentiated. Probabilities are clamped at
// kProbEpsilon before any logarithm; divergences are averaged (not summed)
// over batch rows so loss weights are batch-size independent. Natural log
// throughout.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "intradist/autodiff.hpp"
#include "intradist/tensor.hpp"

namespace intradist {

// K per-pass output distributions over a batch: probs[pass][row][dim].
struct DistributionBatch {
  std::int64_t passes = 0;
  std::int64_t rows = 0;
  std::int64_t dims = 0;
  std::vector<double> probs;

  static DistributionBatch zeros(std::int64_t k, std::int64_t rows, std::int64_t dims) {
    DistributionBatch d;
    d.passes = k;
    d.rows = rows;
    d.dims = dims;
    d.probs.assign(static_cast<std::size_t>(k * rows * dims), 0.0);
    return d;
  }

  double at(std::int64_t pass, std::int64_t row, std::int64_t dim) const {
    return probs[static_cast<std::size_t>((pass * rows + row) * dims + dim)];
  }
  double& at(std::int64_t pass, std::int64_t row, std::int64_t dim) {
    return probs[static_cast<std::size_t>((pass * rows + row) * dims + dim)];
  }
  std::span<const double> row(std::int64_t pass, std::int64_t r) const {
    return {probs.data() + (pass * rows + r) * dims, static_cast<std::size_t>(dims)};
  }

  void validate() const {
    if (passes < 2) {
      throw std::invalid_argument("distribution batch needs k >= 2 passes, got " +
                                  std::to_string(passes));
    }
    if (rows < 1 || dims < 1 ||
        probs.size() != static_cast<std::size_t>(passes * rows * dims)) {
      throw std::invalid_argument("distribution batch storage does not match its shape");
    }
    for (std::int64_t p = 0; p < passes; ++p) {
      for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::int64_t d = 0; d < dims; ++d) {
          const double v = at(p, r, d);
          if (v < 0.0) {
            throw std::invalid_argument("negative probability in pass " +
                                        std::to_string(p) + " row " + std::to_string(r));
          }
          s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) {
          throw std::invalid_argument("pass " + std::to_string(p) + " row " +
                                      std::to_string(r) + " sums to " +
                                      std::to_string(s) + ", not 1");
        }
      }
    }
  }

  // Build from K row-wise log-probability tensors (e.g. log-softmax outputs).
  static DistributionBatch from_log_probs(std::span<const Tensor> log_probs) {
    if (log_probs.empty()) throw std::invalid_argument("no passes given");
    DistributionBatch d = zeros(static_cast<std::int64_t>(log_probs.size()),
                                log_probs[0].rows(), log_probs[0].cols());
    for (std::int64_t p = 0; p < d.passes; ++p) {
      const Tensor& t = log_probs[static_cast<std::size_t>(p)];
      if (t.rows() != d.rows || t.cols() != d.dims) {
        throw std::invalid_argument("pass " + std::to_string(p) + " has shape " +
                                    shape_str(t.shape) + ", expected " +
                                    shape_str(log_probs[0].shape));
      }
      for (std::int64_t r = 0; r < d.rows; ++r)
        for (std::int64_t c = 0; c < d.dims; ++c)
          d.at(p, r, c) = std::exp(t.at(r, c));
    }
    return d;
  }
};

// KL(p || q) in nats with the 0 * ln(0/q) = 0 convention. A zero q entry
// opposite a positive p entry makes the divergence infinite; that is an
// error here, callers clamp first.
inline double kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl: dimension mismatch " + std::to_string(p.size()) +
                                " vs " + std::to_string(q.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      throw std::domain_error("kl: infinite divergence, q[" + std::to_string(i) +
                              "] = 0 while p[" + std::to_string(i) + "] > 0");
    }
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

namespace detail {

inline std::vector<double> clamped(std::span<const double> p) {
  std::vector<double> out(p.begin(), p.end());
  for (double& v : out) v = v > kProbEpsilon ? v : kProbEpsilon;
  return out;
}

inline std::vector<double> mean_row(const DistributionBatch& d, std::int64_t r) {
  std::vector<double> avg(static_cast<std::size_t>(d.dims), 0.0);
  for (std::int64_t p = 0; p < d.passes; ++p)
    for (std::int64_t c = 0; c < d.dims; ++c)
      avg[static_cast<std::size_t>(c)] += d.at(p, r, c);
  for (double& v : avg) v /= static_cast<double>(d.passes);
  return avg;
}

}  // namespace detail

// (1/K) sum_i [KL(p_i || pbar) + KL(pbar || p_i)], averaged over rows, with
// pbar the per-row mean distribution.
inline double x_divergence(const DistributionBatch& d) {
  d.validate();
  double total = 0.0;
  for (std::int64_t r = 0; r < d.rows; ++r) {
    const auto pbar = detail::clamped(detail::mean_row(d, r));
    double row_sum = 0.0;
    for (std::int64_t i = 0; i < d.passes; ++i) {
      const auto pi = detail::clamped(d.row(i, r));
      row_sum += kl(pi, pbar) + kl(pbar, pi);
    }
    total += row_sum / static_cast<double>(d.passes);
  }
  return total / static_cast<double>(d.rows);
}

// (1/K) sum_i KL(p_i || pbar): the forward-only half of the X-divergence.
inline double js_divergence(const DistributionBatch& d) {
  d.validate();
  double total = 0.0;
  for (std::int64_t r = 0; r < d.rows; ++r) {
    const auto pbar = detail::clamped(detail::mean_row(d, r));
    double row_sum = 0.0;
    for (std::int64_t i = 0; i < d.passes; ++i)
      row_sum += kl(detail::clamped(d.row(i, r)), pbar);
    total += row_sum / static_cast<double>(d.passes);
  }
  return total / static_cast<double>(d.rows);
}

// sum_i sum_j [KL(p_i || p_j) + KL(p_j || p_i)], averaged over rows. Upper
// bounds K^2 times the X-divergence.
inline double generalized_jeffrey(const DistributionBatch& d) {
  d.validate();
  double total = 0.0;
  for (std::int64_t r = 0; r < d.rows; ++r) {
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(d.passes));
    for (std::int64_t i = 0; i < d.passes; ++i)
      rows.push_back(detail::clamped(d.row(i, r)));
    double row_sum = 0.0;
    for (std::int64_t i = 0; i < d.passes; ++i)
      for (std::int64_t j = 0; j < d.passes; ++j)
        row_sum += kl(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]) +
                   kl(rows[static_cast<std::size_t>(j)], rows[static_cast<std::size_t>(i)]);
    total += row_sum;
  }
  return total / static_cast<double>(d.rows);
}

// (1/K) sum_i mean((p_i - pbar)^2): the regression-side intra loss. Takes K
// equally shaped per-pass output tensors.
inline double mse_intra(std::span<const Tensor> outputs) {
  if (outputs.size() < 2) {
    throw std::invalid_argument("mse intra needs k >= 2 passes, got " +
                                std::to_string(outputs.size()));
  }
  const std::size_t n = outputs[0].values.size();
  for (const Tensor& t : outputs) {
    if (!t.same_shape(outputs[0])) {
      throw std::invalid_argument("mse intra: pass shape mismatch " +
                                  shape_str(t.shape) + " vs " +
                                  shape_str(outputs[0].shape));
    }
  }
  const double k = static_cast<double>(outputs.size());
  std::vector<double> mean_out(n, 0.0);
  for (const Tensor& t : outputs)
    for (std::size_t i = 0; i < n; ++i) mean_out[i] += t.values[i];
  for (double& v : mean_out) v /= k;
  double total = 0.0;
  for (const Tensor& t : outputs) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = t.values[i] - mean_out[i];
      s += diff * diff;
    }
    total += s / static_cast<double>(n);
  }
  return total / k;
}

// Mean negative log-likelihood of integer labels under row-wise log-probs.
inline double task_loss(const Tensor& log_probs, std::span<const std::int64_t> labels) {
  if (log_probs.shape.size() != 2 ||
      log_probs.rows() != static_cast<std::int64_t>(labels.size())) {
    throw std::invalid_argument("task loss: outputs " + shape_str(log_probs.shape) +
                                " do not match " + std::to_string(labels.size()) +
                                " labels");
  }
  double s = 0.0;
  for (std::int64_t r = 0; r < log_probs.rows(); ++r) {
    const std::int64_t y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= log_probs.cols()) {
      throw std::out_of_range("label " + std::to_string(y) + " out of range [0, " +
                              std::to_string(log_probs.cols()) + ") at row " +
                              std::to_string(r));
    }
    s -= log_probs.at(r, y);
  }
  return s / static_cast<double>(log_probs.rows());
}

// Mean squared error against regression targets.
inline double task_loss(const Tensor& outputs, const Tensor& targets) {
  if (!outputs.same_shape(targets)) {
    throw std::invalid_argument("task loss: outputs " + shape_str(outputs.shape) +
                                " vs targets " + shape_str(targets.shape));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < outputs.values.size(); ++i) {
    const double d = outputs.values[i] - targets.values[i];
    s += d * d;
  }
  return s / static_cast<double>(outputs.numel());
}

// Composite objective value: mean of the per-pass task losses plus
// alpha_prime times the intra loss, with the full breakdown kept.
struct LossValue {
  double total = 0.0;
  std::vector<double> task_losses;
  double task_mean = 0.0;
  double intra_loss = 0.0;
  double alpha_prime = 0.0;
};

inline LossValue composite_loss(std::span<const double> task_losses, double intra,
                                double alpha_prime) {
  if (task_losses.empty()) throw std::invalid_argument("composite loss: no task losses");
  if (alpha_prime < 0.0) {
    throw std::invalid_argument("composite loss: alpha' must be >= 0, got " +
                                std::to_string(alpha_prime));
  }
  LossValue v;
  v.task_losses.assign(task_losses.begin(), task_losses.end());
  double s = 0.0;
  for (double l : task_losses) s += l;
  v.task_mean = s / static_cast<double>(task_losses.size());
  v.intra_loss = intra;
  v.alpha_prime = alpha_prime;
  v.total = v.task_mean + alpha_prime * intra;
  return v;
}

// ---------------------------------------------------------------------------
// Graph-side assemblies (differentiable).
// ---------------------------------------------------------------------------

// Mean NLL over rows: -(1/rows) * sum(log_probs * onehot(labels)).
inline Value nll_node(Graph& g, Value log_probs, std::span<const std::int64_t> labels) {
  const Tensor& lp = g.tensor(log_probs);
  if (lp.shape.size() != 2 || lp.rows() != static_cast<std::int64_t>(labels.size())) {
    throw std::invalid_argument("nll: outputs " + shape_str(lp.shape) +
                                " do not match " + std::to_string(labels.size()) +
                                " labels");
  }
  Tensor onehot = Tensor::zeros(lp.shape);
  for (std::int64_t r = 0; r < lp.rows(); ++r) {
    const std::int64_t y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= lp.cols()) {
      throw std::out_of_range("label " + std::to_string(y) + " out of range [0, " +
                              std::to_string(lp.cols()) + ") at row " +
                              std::to_string(r));
    }
    onehot.at(r, y) = 1.0;
  }
  Value picked = g.sum(g.multiply(log_probs, g.leaf(std::move(onehot))));
  return g.scale(picked, -1.0 / static_cast<double>(lp.rows()));
}

// Mean squared error node against constant targets.
inline Value mse_node(Graph& g, Value outputs, const Tensor& targets) {
  const Tensor& out = g.tensor(outputs);
  if (!out.same_shape(targets)) {
    throw std::invalid_argument("mse: outputs " + shape_str(out.shape) +
                                " vs targets " + shape_str(targets.shape));
  }
  return g.mean(g.square(g.subtract(outputs, g.leaf(targets))));
}

// X-divergence over K per-pass probability tensors (rows x dims), averaged
// over rows. pass_probs typically come from exp(log_softmax(...)).
inline Value x_divergence_node(Graph& g, std::span<const Value> pass_probs) {
  if (pass_probs.size() < 2) {
    throw std::invalid_argument("x-divergence needs k >= 2 passes, got " +
                                std::to_string(pass_probs.size()));
  }
  const std::int64_t rows = g.tensor(pass_probs[0]).rows();
  const double k = static_cast<double>(pass_probs.size());

  Value acc_probs = pass_probs[0];
  for (std::size_t i = 1; i < pass_probs.size(); ++i)
    acc_probs = g.add(acc_probs, pass_probs[i]);
  Value pbar = g.scale(acc_probs, 1.0 / k);
  Value log_pbar = g.log(pbar);

  Value total{};
  for (std::size_t i = 0; i < pass_probs.size(); ++i) {
    Value log_pi = g.log(pass_probs[i]);
    Value diff = g.subtract(log_pi, log_pbar);
    Value forward = g.sum(g.multiply(pass_probs[i], diff));   // KL(p_i || pbar)
    Value reverse = g.scale(g.sum(g.multiply(pbar, diff)), -1.0);  // KL(pbar || p_i)
    Value term = g.add(forward, reverse);
    total = i == 0 ? term : g.add(total, term);
  }
  return g.scale(total, 1.0 / (k * static_cast<double>(rows)));
}

// MSE intra loss over K per-pass output tensors.
inline Value mse_intra_node(Graph& g, std::span<const Value> pass_outputs) {
  if (pass_outputs.size() < 2) {
    throw std::invalid_argument("mse intra needs k >= 2 passes, got " +
                                std::to_string(pass_outputs.size()));
  }
  const double k = static_cast<double>(pass_outputs.size());
  Value acc = pass_outputs[0];
  for (std::size_t i = 1; i < pass_outputs.size(); ++i)
    acc = g.add(acc, pass_outputs[i]);
  Value mean_out = g.scale(acc, 1.0 / k);
  Value total{};
  for (std::size_t i = 0; i < pass_outputs.size(); ++i) {
    Value term = g.mean(g.square(g.subtract(pass_outputs[i], mean_out)));
    total = i == 0 ? term : g.add(total, term);
  }
  return g.scale(total, 1.0 / k);
}

// Mean over rows of KL(teacher || student) with a fixed teacher distribution.
// Only the student log-probs participate in gradients.
inline Value distill_kl_node(Graph& g, const Tensor& teacher_probs,
                             Value student_log_probs) {
  const Tensor& lp = g.tensor(student_log_probs);
  if (!lp.same_shape(teacher_probs)) {
    throw std::invalid_argument("distill kl: teacher " + shape_str(teacher_probs.shape) +
                                " vs student " + shape_str(lp.shape));
  }
  double teacher_entropy_term = 0.0;  // sum of p_t * ln(p_t), clamped
  for (double v : teacher_probs.values) {
    const double c = v > kProbEpsilon ? v : kProbEpsilon;
    if (v > 0.0) teacher_entropy_term += v * std::log(c);
  }
  Value cross = g.sum(g.multiply(g.leaf(teacher_probs), student_log_probs));
  Value klsum = g.subtract(g.leaf(Tensor::scalar(teacher_entropy_term)), cross);
  return g.scale(klsum, 1.0 / static_cast<double>(lp.rows()));
}

}  // namespace intradist

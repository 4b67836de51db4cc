// Training loops: standard single-pass, K-pass intra-distillation, and
// self-distillation against a fixed teacher.
//
// Every step records one graph and runs exactly one backward sweep; the K
// passes share the same parameter leaves so their gradients accumulate
// there. All randomness is drawn from per-purpose counter streams (data:
// stream = step; dropout: stream = (step << 6) | pass), which makes runs
// bit-reproducible and lets the standard and K-pass trainers consume
// identical draw sequences.
#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "intradist/autodiff.hpp"
#include "intradist/data.hpp"
#include "intradist/model.hpp"
#include "intradist/objective.hpp"
#include "intradist/rng.hpp"
#include "intradist/schedule.hpp"

namespace intradist {

enum class TrainMode : std::uint8_t { standard, intra_distill, self_distill };

inline const char* train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::standard: return "standard";
    case TrainMode::intra_distill: return "intra";
    case TrainMode::self_distill: return "self-distill";
  }
  return "?";
}

inline TrainMode train_mode_from_name(const std::string& s) {
  if (s == "standard") return TrainMode::standard;
  if (s == "intra") return TrainMode::intra_distill;
  if (s == "self-distill") return TrainMode::self_distill;
  throw std::invalid_argument("unknown train mode '" + s + "'");
}

enum class OptimAlgo : std::uint8_t { sgd, adam };

struct OptimizerConfig {
  OptimAlgo algo = OptimAlgo::sgd;
  double learning_rate = 0.1;
  std::int64_t steps = 1000;
  std::int64_t batch_size = 32;
  double weight_decay = 0.0;
};

struct Seeds {
  std::uint64_t init = 1;
  std::uint64_t data = 2;
  std::uint64_t dropout = 3;
};

struct TrainConfig {
  MlpConfig model;
  TrainMode mode = TrainMode::standard;
  int k_passes = 1;
  AlphaSchedule schedule;
  OptimizerConfig optim;
  Seeds seeds;
  std::int64_t checkpoint_every = 100;
  std::int64_t eval_batches = 100;
  bool share_masks = false;
  // Weight of the task term in self-distillation. Eq-style 1:1 weighting by
  // default; tests isolate the distillation term by setting it to zero.
  double self_distill_task_weight = 1.0;

  void validate() const {
    model.validate();
    schedule.validate();
    if (optim.steps < 1 || optim.batch_size < 1) {
      throw std::invalid_argument("optimizer steps and batch size must be >= 1");
    }
    if (optim.learning_rate < 0.0 || optim.weight_decay < 0.0) {
      throw std::invalid_argument("learning rate and weight decay must be >= 0");
    }
    if (checkpoint_every < 1) {
      throw std::invalid_argument("checkpoint-every must be >= 1");
    }
    if (mode == TrainMode::intra_distill) {
      if (k_passes < 2) {
        throw std::invalid_argument("intra-distillation needs k-passes >= 2, got " +
                                    std::to_string(k_passes));
      }
      if (schedule.n_total != optim.steps) {
        throw std::invalid_argument("schedule total-steps (" +
                                    std::to_string(schedule.n_total) +
                                    ") must equal optimizer steps (" +
                                    std::to_string(optim.steps) + ")");
      }
    }
    if (k_passes < 1 || k_passes > 63) {
      throw std::invalid_argument("k-passes must be in [1, 63]");
    }
  }
};

struct StepRecord {
  std::int64_t step = 0;
  double task_loss_mean = 0.0;
  double intra_loss = 0.0;
  double alpha_prime = 0.0;
  double wall_ms = 0.0;
};

struct EvalRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double metric = 0.0;  // accuracy for classification, MSE for regression
};

struct TrainMetrics {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  std::size_t best_eval = 0;  // index into evals; min loss, earliest on ties

  const EvalRecord& best() const {
    if (evals.empty()) throw std::logic_error("no evaluation records");
    return evals[best_eval];
  }
};

struct TrainResult {
  ParameterVector final_params;
  ParameterVector best_params;
  TrainMetrics metrics;
};

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;
};

// Evaluation-mode metrics on a full dataset: mean NLL + accuracy for
// classification (argmax, ties to the lower class index), MSE for regression.
inline EvalResult evaluate(const MlpConfig& config, const ParameterVector& params,
                           const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: dataset is empty");
  const Tensor out = mlp_forward_eval(config, params, data.inputs);
  EvalResult r;
  if (config.task == TaskKind::classification) {
    r.loss = task_loss(out, data.labels);
    std::int64_t correct = 0;
    for (std::int64_t i = 0; i < out.rows(); ++i) {
      std::int64_t arg = 0;
      for (std::int64_t c = 1; c < out.cols(); ++c)
        if (out.at(i, c) > out.at(i, arg)) arg = c;
      if (arg == data.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    r.metric = static_cast<double>(correct) / static_cast<double>(out.rows());
  } else {
    r.loss = task_loss(out, data.targets);
    r.metric = r.loss;
  }
  return r;
}

namespace detail {

// SGD / Adam over the segment tensors. Weight decay enters the gradient.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, const ParameterVector& params)
      : config_(config) {
    if (config_.algo == OptimAlgo::adam) {
      m_.reserve(params.segments.size());
      v_.reserve(params.segments.size());
      for (const auto& s : params.segments) {
        m_.push_back(Tensor::zeros(s.tensor.shape));
        v_.push_back(Tensor::zeros(s.tensor.shape));
      }
    }
  }

  void step(ParameterVector& params, const std::vector<Value>& param_values,
            const GradientTable& grads) {
    ++t_;
    for (std::size_t s = 0; s < params.segments.size(); ++s) {
      auto& theta = params.segments[s].tensor.values;
      const auto& g = grads.at(param_values[s]).values;
      if (config_.algo == OptimAlgo::sgd) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
          const double gi = g[i] + config_.weight_decay * theta[i];
          theta[i] -= config_.learning_rate * gi;
        }
      } else {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        auto& m = m_[s].values;
        auto& v = v_[s].values;
        for (std::size_t i = 0; i < theta.size(); ++i) {
          const double gi = g[i] + config_.weight_decay * theta[i];
          m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
          v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
          const double mhat = m[i] / bc1;
          const double vhat = v[i] / bc2;
          theta[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + eps);
        }
      }
    }
  }

 private:
  OptimizerConfig config_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct StepLoss {
  Value root;
  double task_loss_mean = 0.0;
  double intra_loss = 0.0;
};

}  // namespace detail

// Shared loop: `build_step` records the step's objective on the graph and
// returns the root plus the logged breakdown.
template <typename BuildStep>
inline TrainResult run_training_loop(const TrainConfig& config, const Dataset& train,
                                     const Dataset& val, BuildStep&& build_step) {
  config.validate();
  if (train.size() == 0 || val.size() == 0) {
    throw std::invalid_argument("train and validation datasets must be non-empty");
  }

  RngStream init_rng(config.seeds.init, 0);
  ParameterVector params = init_mlp(config.model, init_rng);

  detail::Optimizer optimizer(config.optim, params);
  TrainResult result;
  result.metrics.steps.reserve(static_cast<std::size_t>(config.optim.steps));

  for (std::int64_t step = 1; step <= config.optim.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();

    RngStream data_rng(config.seeds.data, static_cast<std::uint64_t>(step));
    const Batch batch = sample_batch(train, data_rng, config.optim.batch_size);

    Graph g;
    const std::vector<Value> param_values = bind_parameters(g, params);
    const Value input = g.leaf(batch.inputs);
    const double alpha_prime =
        config.mode == TrainMode::intra_distill ? alpha_at(config.schedule, step) : 0.0;

    detail::StepLoss loss;
    try {
      loss = build_step(g, param_values, input, batch, step);
      if (!std::isfinite(g.scalar_value(loss.root))) {
        throw std::runtime_error("non-finite loss");
      }
      const GradientTable grads = g.backward(loss.root);
      optimizer.step(params, param_values, grads);
    } catch (const std::runtime_error& e) {
      if (std::string(e.what()).find("non-finite") != std::string::npos) {
        throw std::runtime_error("training diverged at step " + std::to_string(step) +
                                 ": " + e.what());
      }
      throw;
    }

    const auto t1 = std::chrono::steady_clock::now();
    StepRecord rec;
    rec.step = step;
    rec.task_loss_mean = loss.task_loss_mean;
    rec.intra_loss = loss.intra_loss;
    rec.alpha_prime = alpha_prime;
    rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.metrics.steps.push_back(rec);

    if (step % config.checkpoint_every == 0 || step == config.optim.steps) {
      const EvalResult ev = evaluate(config.model, params, val);
      EvalRecord er{step, ev.loss, ev.metric};
      result.metrics.evals.push_back(er);
      if (result.metrics.evals.size() == 1 ||
          er.loss < result.metrics.evals[result.metrics.best_eval].loss) {
        result.metrics.best_eval = result.metrics.evals.size() - 1;
        result.best_params = params;
      }
    }
  }
  result.final_params = std::move(params);
  return result;
}

namespace detail {

inline std::vector<Value> mask_values_for_pass(Graph& g, const TrainConfig& config,
                                               std::int64_t step, int pass,
                                               std::int64_t rows) {
  std::vector<Value> mask_values;
  if (config.model.dropout_rate <= 0.0) return mask_values;
  const int mask_pass = config.share_masks ? 0 : pass;
  RngStream rng(config.seeds.dropout, mask_stream_id(step, mask_pass));
  const auto masks = draw_hidden_masks(config.model, rng, rows);
  mask_values.reserve(masks.size());
  for (const auto& m : masks) mask_values.push_back(g.leaf(m.as_tensor()));
  return mask_values;
}

inline Value task_node(Graph& g, const MlpConfig& model, Value output, const Batch& b) {
  return model.task == TaskKind::classification ? nll_node(g, output, b.labels)
                                                : mse_node(g, output, b.targets);
}

}  // namespace detail

// Baseline: one dropout pass per step, plain task loss.
inline TrainResult train_standard(const TrainConfig& config, const Dataset& train,
                                  const Dataset& val) {
  TrainConfig cfg = config;
  cfg.mode = TrainMode::standard;
  return run_training_loop(
      cfg, train, val,
      [&cfg](Graph& g, const std::vector<Value>& params, Value input, const Batch& batch,
             std::int64_t step) {
        const auto masks = detail::mask_values_for_pass(g, cfg, step, 0, batch.rows());
        const Value out = mlp_forward(g, cfg.model, params, input, masks);
        const Value task = detail::task_node(g, cfg.model, out, batch);
        return detail::StepLoss{task, g.scalar_value(task), 0.0};
      });
}

// K-pass intra-distillation: K dropout passes, mean task loss plus
// alpha'(step) times the intra loss (X-divergence for classification, MSE
// for regression), one backward through the combined objective.
inline TrainResult train_intra_distill(const TrainConfig& config, const Dataset& train,
                                       const Dataset& val) {
  TrainConfig cfg = config;
  cfg.mode = TrainMode::intra_distill;
  return run_training_loop(
      cfg, train, val,
      [&cfg](Graph& g, const std::vector<Value>& params, Value input, const Batch& batch,
             std::int64_t step) {
        const int k = cfg.k_passes;
        std::vector<Value> task_nodes;
        std::vector<Value> intra_inputs;  // probs (classification) or outputs
        task_nodes.reserve(static_cast<std::size_t>(k));
        intra_inputs.reserve(static_cast<std::size_t>(k));
        for (int pass = 0; pass < k; ++pass) {
          const auto masks =
              detail::mask_values_for_pass(g, cfg, step, pass, batch.rows());
          const Value out = mlp_forward(g, cfg.model, params, input, masks);
          task_nodes.push_back(detail::task_node(g, cfg.model, out, batch));
          intra_inputs.push_back(
              cfg.model.task == TaskKind::classification ? g.exp(out) : out);
        }
        Value task_sum = task_nodes[0];
        for (int i = 1; i < k; ++i) task_sum = g.add(task_sum, task_nodes[i]);
        const Value task_mean = g.scale(task_sum, 1.0 / static_cast<double>(k));

        const Value intra = cfg.model.task == TaskKind::classification
                                ? x_divergence_node(g, intra_inputs)
                                : mse_intra_node(g, intra_inputs);
        const double alpha_prime = alpha_at(cfg.schedule, step);
        const Value root = g.add(task_mean, g.scale(intra, alpha_prime));
        return detail::StepLoss{root, g.scalar_value(task_mean), g.scalar_value(intra)};
      });
}

// Self-distillation: task NLL plus KL(teacher || student), teacher fixed in
// evaluation mode, 1:1 weighting. Classification only.
inline TrainResult train_self_distill(const TrainConfig& config, const Dataset& train,
                                      const Dataset& val, const ParameterVector& teacher) {
  if (config.model.task != TaskKind::regression &&
      teacher.total_count() != config.model.parameter_count()) {
    throw std::invalid_argument("teacher has " + std::to_string(teacher.total_count()) +
                                " parameters, student model expects " +
                                std::to_string(config.model.parameter_count()));
  }
  if (config.model.task != TaskKind::classification) {
    throw std::invalid_argument("self-distillation is defined for classification");
  }
  TrainConfig cfg = config;
  cfg.mode = TrainMode::self_distill;
  return run_training_loop(
      cfg, train, val,
      [&cfg, &teacher](Graph& g, const std::vector<Value>& params, Value input,
                       const Batch& batch, std::int64_t step) {
        // Teacher runs outside the graph; its output is a constant.
        const Tensor teacher_logp = mlp_forward_eval(cfg.model, teacher, batch.inputs);
        Tensor teacher_probs = teacher_logp;
        for (double& v : teacher_probs.values) v = std::exp(v);

        const auto masks = detail::mask_values_for_pass(g, cfg, step, 0, batch.rows());
        const Value out = mlp_forward(g, cfg.model, params, input, masks);
        const Value task = detail::task_node(g, cfg.model, out, batch);
        const Value distill = distill_kl_node(g, teacher_probs, out);
        const double w = cfg.self_distill_task_weight;
        const Value root =
            w == 1.0 ? g.add(task, distill) : g.add(g.scale(task, w), distill);
        return detail::StepLoss{root, g.scalar_value(task), g.scalar_value(distill)};
      });
}

}  // namespace intradist

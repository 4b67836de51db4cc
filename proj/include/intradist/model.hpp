// Small MLP family with a flat, bijective parameter view.
//
// Sensitivity ranking and pruning need one global order over all parameters,
// so every parameter has a flat index mapping to (segment, offset) and back.
// ParameterVector is value-semantic; zero_out copies, never mutates.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "intradist/autodiff.hpp"
#include "intradist/rng.hpp"
#include "intradist/tensor.hpp"

namespace intradist {

enum class TaskKind : std::uint8_t { classification, regression };

inline const char* task_name(TaskKind t) {
  return t == TaskKind::classification ? "classification" : "regression";
}

inline TaskKind task_from_name(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "regression") return TaskKind::regression;
  throw std::invalid_argument("unknown task '" + s + "'");
}

struct MlpConfig {
  std::int64_t input_dim = 1;
  std::vector<std::int64_t> hidden_dims;
  std::int64_t output_dim = 1;
  TaskKind task = TaskKind::classification;
  double dropout_rate = 0.0;

  void validate() const {
    if (input_dim < 1 || output_dim < 1) {
      throw std::invalid_argument("mlp dims must be >= 1");
    }
    for (std::int64_t h : hidden_dims) {
      if (h < 1) throw std::invalid_argument("mlp hidden dims must be >= 1");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw std::invalid_argument("dropout rate must be in [0, 1)");
    }
  }

  std::size_t layer_count() const { return hidden_dims.size() + 1; }

  // (fan_in, fan_out) of layer l.
  std::pair<std::int64_t, std::int64_t> layer_dims(std::size_t l) const {
    const std::int64_t in = l == 0 ? input_dim : hidden_dims[l - 1];
    const std::int64_t out = l == hidden_dims.size() ? output_dim : hidden_dims[l];
    return {in, out};
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (std::size_t l = 0; l < layer_count(); ++l) {
      const auto [in, out] = layer_dims(l);
      n += in * out + out;
    }
    return n;
  }
};

struct ParameterVector {
  struct Segment {
    std::string name;
    Tensor tensor;
  };
  std::vector<Segment> segments;

  std::int64_t total_count() const {
    std::int64_t n = 0;
    for (const auto& s : segments) n += s.tensor.numel();
    return n;
  }

  // Flat index -> (segment, offset). The mapping is the concatenation order
  // of the segments, a bijection over [0, total_count).
  std::pair<std::size_t, std::int64_t> locate(std::int64_t flat) const {
    if (flat < 0) {
      throw std::out_of_range("flat parameter index " + std::to_string(flat) +
                              " is negative");
    }
    std::int64_t base = 0;
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const std::int64_t n = segments[s].tensor.numel();
      if (flat < base + n) return {s, flat - base};
      base += n;
    }
    throw std::out_of_range("flat parameter index " + std::to_string(flat) +
                            " out of range [0, " + std::to_string(base) + ")");
  }

  double get(std::int64_t flat) const {
    const auto [s, off] = locate(flat);
    return segments[s].tensor.values[static_cast<std::size_t>(off)];
  }

  void set(std::int64_t flat, double v) {
    const auto [s, off] = locate(flat);
    segments[s].tensor.values[static_cast<std::size_t>(off)] = v;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total_count()));
    for (const auto& s : segments)
      out.insert(out.end(), s.tensor.values.begin(), s.tensor.values.end());
    return out;
  }

  // Segment name of a flat index, for report exports.
  const std::string& segment_name(std::int64_t flat) const {
    return segments[locate(flat).first].name;
  }
};

// Sorted unique flat indices into a ParameterVector.
struct ParameterSubset {
  std::vector<std::int64_t> indices;

  static ParameterSubset of(std::vector<std::int64_t> idx, std::int64_t total) {
    ParameterSubset s;
    s.indices = std::move(idx);
    std::sort(s.indices.begin(), s.indices.end());
    for (std::size_t i = 0; i < s.indices.size(); ++i) {
      if (s.indices[i] < 0 || s.indices[i] >= total) {
        throw std::out_of_range("subset index " + std::to_string(s.indices[i]) +
                                " out of range [0, " + std::to_string(total) + ")");
      }
      if (i > 0 && s.indices[i] == s.indices[i - 1]) {
        throw std::invalid_argument("duplicate subset index " +
                                    std::to_string(s.indices[i]));
      }
    }
    return s;
  }

  bool empty() const { return indices.empty(); }
  std::size_t size() const { return indices.size(); }
};

// Glorot-style uniform init: weights ~ U(-sqrt(6/(fan_in+fan_out)), +...),
// biases zero. Draw order is fixed (layer by layer, row-major), so one seed
// reproduces one vector.
inline ParameterVector init_mlp(const MlpConfig& config, RngStream& rng) {
  config.validate();
  ParameterVector params;
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    const auto [in, out] = config.layer_dims(l);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w = Tensor::zeros({in, out});
    for (double& v : w.values) v = (2.0 * rng.next_double() - 1.0) * bound;
    params.segments.push_back({"layer" + std::to_string(l) + ".weight", std::move(w)});
    params.segments.push_back(
        {"layer" + std::to_string(l) + ".bias", Tensor::zeros({out})});
  }
  return params;
}

// Copy with the subset's entries set to zero. The original is untouched;
// zeroing an already-zero entry is a no-op, so the operation is idempotent.
inline ParameterVector zero_out(const ParameterVector& params,
                                const ParameterSubset& subset) {
  ParameterVector out = params;
  const std::int64_t total = out.total_count();
  for (std::int64_t idx : subset.indices) {
    if (idx < 0 || idx >= total) {
      throw std::out_of_range("zero_out index " + std::to_string(idx) +
                              " out of range [0, " + std::to_string(total) + ")");
    }
    out.set(idx, 0.0);
  }
  return out;
}

// Bind every parameter segment as a graph leaf, in segment order.
inline std::vector<Value> bind_parameters(Graph& g, const ParameterVector& params) {
  std::vector<Value> values;
  values.reserve(params.segments.size());
  for (const auto& s : params.segments) values.push_back(g.leaf(s.tensor));
  return values;
}

// Forward pass on the graph. hidden_masks, when non-empty, must hold one
// dropout mask value per hidden layer (training passes only); evaluation
// passes leave it empty. Classification outputs row-wise log-probabilities,
// regression outputs raw values.
inline Value mlp_forward(Graph& g, const MlpConfig& config,
                         std::span<const Value> param_values, Value input,
                         std::span<const Value> hidden_masks = {}) {
  if (param_values.size() != 2 * config.layer_count()) {
    throw std::invalid_argument("expected " + std::to_string(2 * config.layer_count()) +
                                " parameter tensors, got " +
                                std::to_string(param_values.size()));
  }
  if (!hidden_masks.empty() && hidden_masks.size() != config.hidden_dims.size()) {
    throw std::invalid_argument("expected one dropout mask per hidden layer");
  }
  const Tensor& x = g.tensor(input);
  if (x.shape.size() != 2 || x.cols() != config.input_dim) {
    throw std::invalid_argument("batch shape " + shape_str(x.shape) +
                                " does not match input dim " +
                                std::to_string(config.input_dim));
  }
  Value h = input;
  for (std::size_t l = 0; l < config.hidden_dims.size(); ++l) {
    h = g.relu(g.add_bias(g.matmul(h, param_values[2 * l]), param_values[2 * l + 1]));
    if (!hidden_masks.empty()) h = g.multiply(h, hidden_masks[l]);
  }
  const std::size_t last = config.hidden_dims.size();
  Value out = g.add_bias(g.matmul(h, param_values[2 * last]), param_values[2 * last + 1]);
  return config.task == TaskKind::classification ? g.log_softmax(out) : out;
}

// Evaluation-mode forward: a pure function of (params, batch).
inline Tensor mlp_forward_eval(const MlpConfig& config, const ParameterVector& params,
                               const Tensor& batch) {
  Graph g;
  const auto values = bind_parameters(g, params);
  const Value out = mlp_forward(g, config, values, g.leaf(batch));
  return g.tensor(out);
}

// Per-hidden-layer dropout masks for one training pass over `rows` examples.
inline std::vector<DropoutMask> draw_hidden_masks(const MlpConfig& config,
                                                  RngStream& rng, std::int64_t rows) {
  std::vector<DropoutMask> masks;
  masks.reserve(config.hidden_dims.size());
  for (std::int64_t h : config.hidden_dims)
    masks.push_back(draw_mask(rng, {rows, h}, config.dropout_rate));
  return masks;
}

}  // namespace intradist

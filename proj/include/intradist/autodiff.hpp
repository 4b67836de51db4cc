// Reverse-mode differentiation over dense tensors.
//
// A Graph is an append-only tape: operands always precede consumers, so one
// reverse sweep in append order is a valid backward pass and visits each node
// exactly once. Tensors are immutable once recorded; any non-finite value
// produced by an op is an error state and throws immediately.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "intradist/rng.hpp"
#include "intradist/tensor.hpp"

namespace intradist {

// Floor applied inside the log op so divergences stay finite on probabilities
// that underflow to zero.
inline constexpr double kProbEpsilon = 1e-12;

enum class OpKind : std::uint8_t {
  leaf,
  matmul,       // [r x k] * [k x c] -> [r x c]
  add_bias,     // [r x c] + [c] broadcast over rows
  add,          // elementwise, equal shapes
  subtract,     // elementwise, equal shapes
  multiply,     // elementwise, equal shapes (dropout masks, one-hot picks)
  relu,
  log_softmax,  // row-wise over a rank-2 tensor
  exp,
  log,          // ln(max(x, kProbEpsilon))
  sum,          // all entries -> scalar
  mean,         // all entries -> scalar
  scalar_scale, // x * attr
  square,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add_bias: return "add-bias";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::multiply: return "elementwise-multiply";
    case OpKind::relu: return "relu";
    case OpKind::log_softmax: return "log-softmax";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::scalar_scale: return "scalar-scale";
    case OpKind::square: return "square";
  }
  return "?";
}

// Handle to a recorded node. Valid only for the graph that produced it.
struct Value {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

class GradientTable {
 public:
  explicit GradientTable(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  const Tensor& at(Value v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= grads_.size()) {
      throw std::out_of_range("gradient lookup for unknown node");
    }
    return grads_[static_cast<std::size_t>(v.id)];
  }

 private:
  std::vector<Tensor> grads_;
};

class Graph {
 public:
  Value leaf(Tensor t) {
    nodes_.push_back(Node{OpKind::leaf, {-1, -1}, 0, 0.0, std::move(t)});
    return Value{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // Records one op and eagerly evaluates it. Shape checking happens here so
  // every error names the op kind and the offending shapes.
  Value record(OpKind kind, std::span<const Value> operands, double attr = 0.0) {
    Node node;
    node.kind = kind;
    node.attr = attr;
    node.n_in = static_cast<int>(operands.size());
    if (node.n_in > 2) throw std::invalid_argument("ops take at most two operands");
    for (int i = 0; i < node.n_in; ++i) {
      if (!operands[i].valid() ||
          static_cast<std::size_t>(operands[i].id) >= nodes_.size()) {
        throw std::invalid_argument(std::string(op_name(kind)) +
                                    ": operand is not a node of this graph");
      }
      node.in[static_cast<std::size_t>(i)] = operands[i].id;
    }
    node.out = eval(node);
    if (!all_finite(node.out)) {
      throw std::runtime_error(std::string("non-finite value produced by ") +
                               op_name(kind));
    }
    nodes_.push_back(std::move(node));
    return Value{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Value matmul(Value a, Value b) { return record2(OpKind::matmul, a, b); }
  Value add_bias(Value x, Value b) { return record2(OpKind::add_bias, x, b); }
  Value add(Value a, Value b) { return record2(OpKind::add, a, b); }
  Value subtract(Value a, Value b) { return record2(OpKind::subtract, a, b); }
  Value multiply(Value a, Value b) { return record2(OpKind::multiply, a, b); }
  Value relu(Value x) { return record1(OpKind::relu, x); }
  Value log_softmax(Value x) { return record1(OpKind::log_softmax, x); }
  Value exp(Value x) { return record1(OpKind::exp, x); }
  Value log(Value x) { return record1(OpKind::log, x); }
  Value sum(Value x) { return record1(OpKind::sum, x); }
  Value mean(Value x) { return record1(OpKind::mean, x); }
  Value scale(Value x, double c) { return record1(OpKind::scalar_scale, x, c); }
  Value square(Value x) { return record1(OpKind::square, x); }

  const Tensor& tensor(Value v) const { return node_at(v).out; }
  double scalar_value(Value v) const { return node_at(v).out.scalar_value(); }
  std::size_t node_count() const { return nodes_.size(); }

  // One reverse sweep from a scalar root. Returns a gradient for every node;
  // leaves not reachable from the root get zero gradients.
  GradientTable backward(Value root) const {
    const Node& root_node = node_at(root);
    if (!root_node.out.is_scalar()) {
      throw std::invalid_argument("backward root must be scalar-shaped, got " +
                                  shape_str(root_node.out.shape));
    }
    std::vector<Tensor> grads(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      grads[i] = Tensor::zeros(nodes_[i].out.shape);
    }
    grads[static_cast<std::size_t>(root.id)].values[0] = 1.0;
    for (std::int32_t id = root.id; id >= 0; --id) {
      const Node& node = nodes_[static_cast<std::size_t>(id)];
      if (node.kind == OpKind::leaf) continue;
      accumulate_operand_grads(node, grads[static_cast<std::size_t>(id)], grads);
    }
    for (const Tensor& g : grads) {
      if (!all_finite(g)) {
        throw std::runtime_error("non-finite value produced by backward sweep");
      }
    }
    return GradientTable(std::move(grads));
  }

 private:
  Value record1(OpKind kind, Value a, double attr = 0.0) {
    const std::array<Value, 1> ops{a};
    return record(kind, std::span<const Value>(ops), attr);
  }
  Value record2(OpKind kind, Value a, Value b) {
    const std::array<Value, 2> ops{a, b};
    return record(kind, std::span<const Value>(ops));
  }

  struct Node {
    OpKind kind = OpKind::leaf;
    std::array<std::int32_t, 2> in = {-1, -1};
    int n_in = 0;
    double attr = 0.0;
    Tensor out;
  };

  const Node& node_at(Value v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw std::out_of_range("value does not belong to this graph");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  const Tensor& in_tensor(const Node& n, int i) const {
    return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(i)])].out;
  }

  [[noreturn]] static void shape_error(OpKind kind, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op_name(kind)) + ": shape mismatch " +
                                shape_str(a.shape) + " vs " + shape_str(b.shape));
  }

  static void require_rank2(OpKind kind, const Tensor& t) {
    if (t.shape.size() != 2) {
      throw std::invalid_argument(std::string(op_name(kind)) +
                                  " expects a rank-2 tensor, got " +
                                  shape_str(t.shape));
    }
  }

  Tensor eval(const Node& node) const {
    switch (node.kind) {
      case OpKind::leaf:
        return node.out;
      case OpKind::matmul: {
        const Tensor& a = in_tensor(node, 0);
        const Tensor& b = in_tensor(node, 1);
        require_rank2(node.kind, a);
        require_rank2(node.kind, b);
        if (a.cols() != b.rows()) shape_error(node.kind, a, b);
        return matmul_nn(a, b);
      }
      case OpKind::add_bias: {
        const Tensor& x = in_tensor(node, 0);
        const Tensor& b = in_tensor(node, 1);
        require_rank2(node.kind, x);
        if (b.shape.size() != 1 || b.shape[0] != x.cols()) shape_error(node.kind, x, b);
        Tensor out = x;
        for (std::int64_t r = 0; r < x.rows(); ++r)
          for (std::int64_t c = 0; c < x.cols(); ++c)
            out.at(r, c) += b.values[static_cast<std::size_t>(c)];
        return out;
      }
      case OpKind::add:
      case OpKind::subtract:
      case OpKind::multiply: {
        const Tensor& a = in_tensor(node, 0);
        const Tensor& b = in_tensor(node, 1);
        if (!a.same_shape(b)) shape_error(node.kind, a, b);
        Tensor out = a;
        for (std::size_t i = 0; i < out.values.size(); ++i) {
          if (node.kind == OpKind::add) out.values[i] += b.values[i];
          else if (node.kind == OpKind::subtract) out.values[i] -= b.values[i];
          else out.values[i] *= b.values[i];
        }
        return out;
      }
      case OpKind::relu: {
        Tensor out = in_tensor(node, 0);
        for (double& v : out.values) v = v > 0.0 ? v : 0.0;
        return out;
      }
      case OpKind::log_softmax: {
        const Tensor& x = in_tensor(node, 0);
        require_rank2(node.kind, x);
        Tensor out = x;
        for (std::int64_t r = 0; r < x.rows(); ++r) {
          double m = out.at(r, 0);
          for (std::int64_t c = 1; c < x.cols(); ++c) m = std::max(m, out.at(r, c));
          double z = 0.0;
          for (std::int64_t c = 0; c < x.cols(); ++c) z += std::exp(out.at(r, c) - m);
          const double lse = m + std::log(z);
          for (std::int64_t c = 0; c < x.cols(); ++c) out.at(r, c) -= lse;
        }
        return out;
      }
      case OpKind::exp: {
        Tensor out = in_tensor(node, 0);
        for (double& v : out.values) v = std::exp(v);
        return out;
      }
      case OpKind::log: {
        Tensor out = in_tensor(node, 0);
        for (double& v : out.values) v = std::log(v > kProbEpsilon ? v : kProbEpsilon);
        return out;
      }
      case OpKind::sum: {
        const Tensor& x = in_tensor(node, 0);
        double s = 0.0;
        for (double v : x.values) s += v;
        return Tensor::scalar(s);
      }
      case OpKind::mean: {
        const Tensor& x = in_tensor(node, 0);
        if (x.numel() == 0) throw std::invalid_argument("mean of empty tensor");
        double s = 0.0;
        for (double v : x.values) s += v;
        return Tensor::scalar(s / static_cast<double>(x.numel()));
      }
      case OpKind::scalar_scale: {
        Tensor out = in_tensor(node, 0);
        for (double& v : out.values) v *= node.attr;
        return out;
      }
      case OpKind::square: {
        Tensor out = in_tensor(node, 0);
        for (double& v : out.values) v *= v;
        return out;
      }
    }
    throw std::logic_error("unhandled op kind");
  }

  void accumulate_operand_grads(const Node& node, const Tensor& g,
                                std::vector<Tensor>& grads) const {
    auto& grad0 = grads[static_cast<std::size_t>(node.in[0])];
    switch (node.kind) {
      case OpKind::leaf:
        return;
      case OpKind::matmul: {
        const Tensor& a = in_tensor(node, 0);
        const Tensor& b = in_tensor(node, 1);
        add_into(grad0, matmul_nt(g, b));
        add_into(grads[static_cast<std::size_t>(node.in[1])], matmul_tn(a, g));
        return;
      }
      case OpKind::add_bias: {
        add_into(grad0, g);
        // Column sums land in a local buffer first so this node contributes
        // exactly one rounded addition per bias entry, independent of what
        // other nodes already accumulated.
        std::vector<double> col_sums(static_cast<std::size_t>(g.cols()), 0.0);
        for (std::int64_t r = 0; r < g.rows(); ++r)
          for (std::int64_t c = 0; c < g.cols(); ++c)
            col_sums[static_cast<std::size_t>(c)] += g.at(r, c);
        auto& gb = grads[static_cast<std::size_t>(node.in[1])];
        for (std::size_t c = 0; c < col_sums.size(); ++c) gb.values[c] += col_sums[c];
        return;
      }
      case OpKind::add: {
        add_into(grad0, g);
        add_into(grads[static_cast<std::size_t>(node.in[1])], g);
        return;
      }
      case OpKind::subtract: {
        add_into(grad0, g);
        auto& gb = grads[static_cast<std::size_t>(node.in[1])];
        for (std::size_t i = 0; i < g.values.size(); ++i) gb.values[i] -= g.values[i];
        return;
      }
      case OpKind::multiply: {
        const Tensor& a = in_tensor(node, 0);
        const Tensor& b = in_tensor(node, 1);
        auto& gb = grads[static_cast<std::size_t>(node.in[1])];
        for (std::size_t i = 0; i < g.values.size(); ++i) {
          grad0.values[i] += g.values[i] * b.values[i];
          gb.values[i] += g.values[i] * a.values[i];
        }
        return;
      }
      case OpKind::relu: {
        const Tensor& x = in_tensor(node, 0);
        for (std::size_t i = 0; i < g.values.size(); ++i)
          if (x.values[i] > 0.0) grad0.values[i] += g.values[i];
        return;
      }
      case OpKind::log_softmax: {
        // dx = dy - softmax(x) * rowsum(dy); softmax recovered from the output.
        const Tensor& y = node.out;
        for (std::int64_t r = 0; r < y.rows(); ++r) {
          double row_sum = 0.0;
          for (std::int64_t c = 0; c < y.cols(); ++c) row_sum += g.at(r, c);
          for (std::int64_t c = 0; c < y.cols(); ++c) {
            grad0.values[static_cast<std::size_t>(r * y.cols() + c)] +=
                g.at(r, c) - std::exp(y.at(r, c)) * row_sum;
          }
        }
        return;
      }
      case OpKind::exp: {
        const Tensor& y = node.out;
        for (std::size_t i = 0; i < g.values.size(); ++i)
          grad0.values[i] += g.values[i] * y.values[i];
        return;
      }
      case OpKind::log: {
        // Zero slope below the clamp floor.
        const Tensor& x = in_tensor(node, 0);
        for (std::size_t i = 0; i < g.values.size(); ++i)
          if (x.values[i] > kProbEpsilon) grad0.values[i] += g.values[i] / x.values[i];
        return;
      }
      case OpKind::sum: {
        const double s = g.values[0];
        for (double& v : grad0.values) v += s;
        return;
      }
      case OpKind::mean: {
        const double s = g.values[0] / static_cast<double>(grad0.numel());
        for (double& v : grad0.values) v += s;
        return;
      }
      case OpKind::scalar_scale: {
        for (std::size_t i = 0; i < g.values.size(); ++i)
          grad0.values[i] += g.values[i] * node.attr;
        return;
      }
      case OpKind::square: {
        const Tensor& x = in_tensor(node, 0);
        for (std::size_t i = 0; i < g.values.size(); ++i)
          grad0.values[i] += 2.0 * x.values[i] * g.values[i];
        return;
      }
    }
  }

  static void add_into(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += src.values[i];
  }

  static Tensor matmul_nn(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros({a.rows(), b.cols()});
    for (std::int64_t i = 0; i < a.rows(); ++i)
      for (std::int64_t k = 0; k < a.cols(); ++k) {
        const double aik = a.at(i, k);
        for (std::int64_t j = 0; j < b.cols(); ++j) out.at(i, j) += aik * b.at(k, j);
      }
    return out;
  }

  // a * b^T
  static Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros({a.rows(), b.rows()});
    for (std::int64_t i = 0; i < a.rows(); ++i)
      for (std::int64_t j = 0; j < b.rows(); ++j) {
        double s = 0.0;
        for (std::int64_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(j, k);
        out.at(i, j) = s;
      }
    return out;
  }

  // a^T * b
  static Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros({a.cols(), b.cols()});
    for (std::int64_t k = 0; k < a.rows(); ++k)
      for (std::int64_t i = 0; i < a.cols(); ++i) {
        const double aki = a.at(k, i);
        for (std::int64_t j = 0; j < b.cols(); ++j) out.at(i, j) += aki * b.at(k, j);
      }
    return out;
  }

  std::vector<Node> nodes_;
};

// Inverted dropout mask: kept entries carry 1/(1-rate) so evaluation needs no
// rescaling.
struct DropoutMask {
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> keep;
  double rate = 0.0;

  Tensor as_tensor() const {
    Tensor t = Tensor::zeros(shape);
    const double scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i]) t.values[i] = scale;
    return t;
  }
};

inline DropoutMask draw_mask(RngStream& rng, std::vector<std::int64_t> shape,
                             double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must be in [0, 1), got " +
                                std::to_string(rate));
  }
  DropoutMask mask;
  mask.rate = rate;
  mask.keep.resize(static_cast<std::size_t>(shape_numel(shape)));
  mask.shape = std::move(shape);
  for (auto& k : mask.keep) k = rng.next_double() >= rate ? 1 : 0;
  return mask;
}

}  // namespace intradist

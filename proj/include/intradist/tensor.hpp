// Dense row-major tensor of doubles. Shapes are small (MLP-sized); all
// storage is a flat vector and product(shape) == values.size() always holds.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace intradist {

inline std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape_in, std::vector<double> values_in)
      : shape(std::move(shape_in)), values(std::move(values_in)) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
      throw std::invalid_argument("tensor shape " + shape_str(shape) +
                                  " does not match value count " +
                                  std::to_string(values.size()));
    }
  }

  static Tensor zeros(std::vector<std::int64_t> shape_in) {
    const auto n = static_cast<std::size_t>(shape_numel(shape_in));
    return Tensor(std::move(shape_in), std::vector<double>(n, 0.0));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
  bool is_scalar() const { return values.size() == 1; }

  double scalar_value() const {
    if (!is_scalar()) {
      throw std::logic_error("tensor " + shape_str(shape) + " is not scalar");
    }
    return values[0];
  }

  std::int64_t dim(std::size_t i) const { return shape.at(i); }

  // 2-d accessors; rows/cols only make sense for rank-2 tensors.
  std::int64_t rows() const { return shape.at(0); }
  std::int64_t cols() const { return shape.at(1); }
  double at(std::int64_t r, std::int64_t c) const {
    return values[static_cast<std::size_t>(r * cols() + c)];
  }
  double& at(std::int64_t r, std::int64_t c) {
    return values[static_cast<std::size_t>(r * cols() + c)];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline bool all_finite(const Tensor& t) {
  for (double v : t.values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace intradist

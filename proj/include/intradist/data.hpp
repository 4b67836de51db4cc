// Synthetic datasets: Gaussian class clusters for classification and a
// fixed random teacher network for regression targets. Everything is a pure
// function of the generator seed.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "intradist/model.hpp"
#include "intradist/rng.hpp"
#include "intradist/tensor.hpp"

namespace intradist {

struct Dataset {
  TaskKind task = TaskKind::classification;
  Tensor inputs;                     // [n x dims]
  std::vector<std::int64_t> labels;  // classification only
  Tensor targets;                    // regression only, [n x 1]
  std::int64_t classes = 0;

  std::int64_t size() const { return inputs.shape.empty() ? 0 : inputs.rows(); }
};

struct Batch {
  TaskKind task = TaskKind::classification;
  Tensor inputs;
  std::vector<std::int64_t> labels;
  Tensor targets;

  std::int64_t rows() const { return inputs.rows(); }
};

// Class centers sit at distance `margin` from the origin in random
// directions; samples are unit-variance Gaussian around their center.
// Labels are balanced round-robin.
inline Dataset make_classification(std::int64_t samples, std::int64_t dims,
                                   std::int64_t classes, double margin,
                                   std::uint64_t seed) {
  if (samples < 1 || dims < 1 || classes < 2) {
    throw std::invalid_argument("classification dataset needs samples >= 1, dims >= 1, "
                                "classes >= 2");
  }
  RngStream center_rng(seed, 0);
  Tensor centers = Tensor::zeros({classes, dims});
  for (std::int64_t c = 0; c < classes; ++c) {
    double norm2 = 0.0;
    for (std::int64_t d = 0; d < dims; ++d) {
      const double v = center_rng.next_gaussian();
      centers.at(c, d) = v;
      norm2 += v * v;
    }
    const double inv = margin / std::sqrt(norm2 > 0 ? norm2 : 1.0);
    for (std::int64_t d = 0; d < dims; ++d) centers.at(c, d) *= inv;
  }

  RngStream sample_rng(seed, 1);
  Dataset data;
  data.task = TaskKind::classification;
  data.classes = classes;
  data.inputs = Tensor::zeros({samples, dims});
  data.labels.resize(static_cast<std::size_t>(samples));
  for (std::int64_t i = 0; i < samples; ++i) {
    const std::int64_t y = i % classes;
    data.labels[static_cast<std::size_t>(i)] = y;
    for (std::int64_t d = 0; d < dims; ++d)
      data.inputs.at(i, d) = centers.at(y, d) + sample_rng.next_gaussian();
  }
  return data;
}

// Targets come from a fixed random two-layer teacher network plus Gaussian
// observation noise of the given scale.
inline Dataset make_regression(std::int64_t samples, std::int64_t dims,
                               double target_noise, std::uint64_t seed) {
  if (samples < 1 || dims < 1 || target_noise < 0.0) {
    throw std::invalid_argument("regression dataset needs samples >= 1, dims >= 1, "
                                "target-noise >= 0");
  }
  MlpConfig teacher_config;
  teacher_config.input_dim = dims;
  teacher_config.hidden_dims = {16};
  teacher_config.output_dim = 1;
  teacher_config.task = TaskKind::regression;
  RngStream teacher_rng(seed, 0);
  const ParameterVector teacher = init_mlp(teacher_config, teacher_rng);

  RngStream sample_rng(seed, 1);
  Dataset data;
  data.task = TaskKind::regression;
  data.inputs = Tensor::zeros({samples, dims});
  for (double& v : data.inputs.values) v = sample_rng.next_gaussian();
  data.targets = mlp_forward_eval(teacher_config, teacher, data.inputs);
  for (double& v : data.targets.values) v += target_noise * sample_rng.next_gaussian();
  return data;
}

// Contiguous row slice [begin, begin + count). Train/validation splits come
// from one generator draw so both sides share the same class centers or
// teacher network without overlapping samples.
inline Dataset slice_dataset(const Dataset& data, std::int64_t begin,
                             std::int64_t count) {
  if (begin < 0 || count < 1 || begin + count > data.size()) {
    throw std::out_of_range("dataset slice [" + std::to_string(begin) + ", " +
                            std::to_string(begin + count) + ") out of range for " +
                            std::to_string(data.size()) + " rows");
  }
  Dataset out;
  out.task = data.task;
  out.classes = data.classes;
  const std::int64_t dims = data.inputs.cols();
  out.inputs = Tensor::zeros({count, dims});
  for (std::int64_t i = 0; i < count; ++i)
    for (std::int64_t d = 0; d < dims; ++d)
      out.inputs.at(i, d) = data.inputs.at(begin + i, d);
  if (data.task == TaskKind::classification) {
    out.labels.assign(data.labels.begin() + begin, data.labels.begin() + begin + count);
  } else {
    out.targets = Tensor::zeros({count, data.targets.cols()});
    for (std::int64_t i = 0; i < count; ++i)
      for (std::int64_t c = 0; c < data.targets.cols(); ++c)
        out.targets.at(i, c) = data.targets.at(begin + i, c);
  }
  return out;
}

inline Batch full_batch(const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("dataset is empty");
  Batch b;
  b.task = data.task;
  b.inputs = data.inputs;
  b.labels = data.labels;
  b.targets = data.targets;
  return b;
}

// Uniform batch with replacement; consumes exactly batch_size index draws.
inline Batch sample_batch(const Dataset& data, RngStream& rng, std::int64_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("dataset is empty");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  Batch b;
  b.task = data.task;
  const std::int64_t dims = data.inputs.cols();
  b.inputs = Tensor::zeros({batch_size, dims});
  if (data.task == TaskKind::classification) {
    b.labels.resize(static_cast<std::size_t>(batch_size));
  } else {
    b.targets = Tensor::zeros({batch_size, data.targets.cols()});
  }
  for (std::int64_t i = 0; i < batch_size; ++i) {
    const auto src = static_cast<std::int64_t>(
        rng.next_index(static_cast<std::uint64_t>(data.size())));
    for (std::int64_t d = 0; d < dims; ++d)
      b.inputs.at(i, d) = data.inputs.at(src, d);
    if (data.task == TaskKind::classification) {
      b.labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(src)];
    } else {
      for (std::int64_t c = 0; c < data.targets.cols(); ++c)
        b.targets.at(i, c) = data.targets.at(src, c);
    }
  }
  return b;
}

// Fixed pool of evaluation batches used by sensitivity measurement, one
// stream per batch so the pool is independent of its size.
inline std::vector<Batch> sample_batch_pool(const Dataset& data, std::uint64_t seed,
                                            std::int64_t count, std::int64_t batch_size) {
  if (count < 1) throw std::invalid_argument("batch pool count must be >= 1");
  std::vector<Batch> pool;
  pool.reserve(static_cast<std::size_t>(count));
  for (std::int64_t b = 0; b < count; ++b) {
    RngStream rng(seed, static_cast<std::uint64_t>(b));
    pool.push_back(sample_batch(data, rng, batch_size));
  }
  return pool;
}

}  // namespace intradist

// Shared test helpers: finite-difference oracle, random model/distribution
// generators, temp directories. These stay independent of the graph backward
// path they are used to check.
#pragma once

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "intradist/data.hpp"
#include "intradist/model.hpp"
#include "intradist/objective.hpp"
#include "intradist/rng.hpp"

namespace testsupport {

using namespace intradist;

inline double rel_err(double got, double want, double abs_floor = 1e-8) {
  const double diff = std::abs(got - want);
  const double scale = std::max(std::abs(want), std::abs(got));
  if (scale < abs_floor) return 0.0;  // both effectively zero
  return diff / scale;
}

// Central finite difference d f / d theta_flat[i], h = 1e-5.
inline double central_difference(const ParameterVector& params, std::int64_t flat,
                                 const std::function<double(const ParameterVector&)>& f,
                                 double h = 1e-5) {
  ParameterVector plus = params;
  plus.set(flat, params.get(flat) + h);
  ParameterVector minus = params;
  minus.set(flat, params.get(flat) - h);
  return (f(plus) - f(minus)) / (2.0 * h);
}

// Central finite difference for a function of a raw tensor entry.
inline double central_difference_tensor(const Tensor& t, std::size_t idx,
                                        const std::function<double(const Tensor&)>& f,
                                        double h = 1e-6) {
  Tensor plus = t;
  plus.values[idx] += h;
  Tensor minus = t;
  minus.values[idx] -= h;
  return (f(plus) - f(minus)) / (2.0 * h);
}

// Random small MLP (widths <= 16) plus a matching random batch.
struct RandomCase {
  MlpConfig config;
  ParameterVector params;
  Batch batch;
};

inline RandomCase random_mlp_case(RngStream& rng, bool classification_only = false) {
  RandomCase c;
  c.config.input_dim = 2 + static_cast<std::int64_t>(rng.next_index(5));
  const auto depth = static_cast<int>(rng.next_index(3));  // 0..2 hidden layers
  for (int l = 0; l < depth; ++l)
    c.config.hidden_dims.push_back(2 + static_cast<std::int64_t>(rng.next_index(15)));
  const bool classify = classification_only || rng.next_double() < 0.5;
  c.config.task = classify ? TaskKind::classification : TaskKind::regression;
  c.config.output_dim = classify ? 2 + static_cast<std::int64_t>(rng.next_index(4)) : 1;
  c.config.dropout_rate = 0.0;

  RngStream init_rng(rng.next_u64(), 0);
  c.params = init_mlp(c.config, init_rng);

  const std::int64_t rows = 2 + static_cast<std::int64_t>(rng.next_index(4));
  c.batch.task = c.config.task;
  c.batch.inputs = Tensor::zeros({rows, c.config.input_dim});
  for (double& v : c.batch.inputs.values) v = rng.next_gaussian();
  if (classify) {
    c.batch.labels.resize(static_cast<std::size_t>(rows));
    for (auto& y : c.batch.labels)
      y = static_cast<std::int64_t>(rng.next_index(
          static_cast<std::uint64_t>(c.config.output_dim)));
  } else {
    c.batch.targets = Tensor::zeros({rows, 1});
    for (double& v : c.batch.targets.values) v = rng.next_gaussian();
  }
  return c;
}

// Dirichlet(concentration) rows via normalized Gamma draws; concentration 1
// reduces to normalized exponentials.
inline DistributionBatch random_distribution_batch(RngStream& rng, std::int64_t k,
                                                   std::int64_t rows, std::int64_t dims,
                                                   double concentration = 1.0) {
  DistributionBatch d = DistributionBatch::zeros(k, rows, dims);
  for (std::int64_t p = 0; p < k; ++p) {
    for (std::int64_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::int64_t c = 0; c < dims; ++c) {
        // Gamma(shape a) by rejection-free sum for a=1, else Marsaglia-Tsang
        // would be overkill here: use the Weibull trick x = E^(1/a) which has
        // the right tail behaviour for shaping spiky vs flat rows.
        const double e = rng.next_exponential();
        const double x = std::pow(e, 1.0 / concentration);
        d.at(p, r, c) = x;
        sum += x;
      }
      for (std::int64_t c = 0; c < dims; ++c) d.at(p, r, c) /= sum;
    }
  }
  return d;
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("intradist_test_" + tag + "_" + std::to_string(++counter) + "_" +
                    std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport

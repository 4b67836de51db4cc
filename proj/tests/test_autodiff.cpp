#include "support.hpp"

#include "intradist/autodiff.hpp"
#include "intradist/model.hpp"
#include "intradist/objective.hpp"

using namespace intradist;
using testsupport::central_difference;
using testsupport::random_mlp_case;
using testsupport::rel_err;

TEST_CASE("matmul shape algebra") {
  Graph g;
  auto a = g.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto b = g.leaf(Tensor::zeros({3, 4}));
  auto c = g.matmul(a, b);
  REQUIRE(g.tensor(c).shape == std::vector<std::int64_t>{2, 4});
}

TEST_CASE("shape mismatch errors name the op and both shapes") {
  Graph g;
  auto a = g.leaf(Tensor::zeros({2, 3}));
  auto b = g.leaf(Tensor::zeros({4, 2}));
  try {
    g.matmul(a, b);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("matmul") != std::string::npos);
    REQUIRE(msg.find("[2x3]") != std::string::npos);
    REQUIRE(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("relu clamps negatives") {
  Graph g;
  auto x = g.leaf(Tensor({3}, {-1, 0, 2}));
  REQUIRE(g.tensor(g.relu(x)).values == std::vector<double>{0, 0, 2});
}

TEST_CASE("log-softmax of equal logits is uniform") {
  Graph g;
  auto x = g.leaf(Tensor({1, 2}, {0, 0}));
  const Tensor out = g.tensor(g.log_softmax(x));
  REQUIRE(out.values[0] == Catch::Approx(-std::log(2.0)).epsilon(1e-15));
  REQUIRE(out.values[1] == Catch::Approx(-std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("log-softmax rows exponentiate and sum to one") {
  RngStream rng(7, 0);
  Graph g;
  Tensor x = Tensor::zeros({5, 7});
  for (double& v : x.values) v = 4.0 * rng.next_gaussian();
  const Tensor out = g.tensor(g.log_softmax(g.leaf(x)));
  for (std::int64_t r = 0; r < out.rows(); ++r) {
    double s = 0.0;
    for (std::int64_t c = 0; c < out.cols(); ++c) s += std::exp(out.at(r, c));
    REQUIRE(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("backward of sum(x*x) is 2x") {
  Graph g;
  auto x = g.leaf(Tensor({2}, {1, 2}));
  auto root = g.sum(g.multiply(x, x));
  const auto grads = g.backward(root);
  REQUIRE(grads.at(x).values == std::vector<double>{2, 4});
}

TEST_CASE("backward of mean spreads 1/n") {
  Graph g;
  auto x = g.leaf(Tensor({4}, {1, 2, 3, 4}));
  const auto grads = g.backward(g.mean(x));
  for (double v : grads.at(x).values) REQUIRE(v == 0.25);
}

TEST_CASE("backward requires a scalar root") {
  Graph g;
  auto x = g.leaf(Tensor({2}, {1, 2}));
  REQUIRE_THROWS_AS(g.backward(g.relu(x)), std::invalid_argument);
}

TEST_CASE("leaves not reachable from the root get zero gradients") {
  Graph g;
  auto x = g.leaf(Tensor({2}, {1, 2}));
  auto unused = g.leaf(Tensor({3}, {5, 6, 7}));
  const auto grads = g.backward(g.sum(x));
  REQUIRE(grads.at(unused).values == std::vector<double>{0, 0, 0});
}

TEST_CASE("non-finite forward values are an error state") {
  Graph g;
  auto x = g.leaf(Tensor({1}, {1000.0}));
  REQUIRE_THROWS_AS(g.exp(x), std::runtime_error);
}

TEST_CASE("MLP gradients match central finite differences") {
  RngStream rng(2026, 0);
  for (int trial = 0; trial < 25; ++trial) {
    const auto c = random_mlp_case(rng);
    const auto loss_of = [&](const ParameterVector& p) {
      const Tensor out = mlp_forward_eval(c.config, p, c.batch.inputs);
      return c.config.task == TaskKind::classification
                 ? task_loss(out, c.batch.labels)
                 : task_loss(out, c.batch.targets);
    };

    Graph g;
    const auto values = bind_parameters(g, c.params);
    const Value out = mlp_forward(g, c.config, values, g.leaf(c.batch.inputs));
    const Value loss = c.config.task == TaskKind::classification
                           ? nll_node(g, out, c.batch.labels)
                           : mse_node(g, out, c.batch.targets);
    const auto grads = g.backward(loss);

    std::vector<double> flat_grad;
    for (const Value v : values)
      for (double gv : grads.at(v).values) flat_grad.push_back(gv);

    for (std::int64_t i = 0; i < c.params.total_count(); ++i) {
      const double fd = central_difference(c.params, i, loss_of);
      REQUIRE(rel_err(flat_grad[static_cast<std::size_t>(i)], fd) < 1e-4);
    }
  }
}

TEST_CASE("forward and backward are bit-reproducible") {
  const auto run = [] {
    RngStream rng(99, 0);
    auto c = random_mlp_case(rng, /*classification_only=*/true);
    RngStream mask_rng(5, mask_stream_id(1, 0));
    c.config.dropout_rate = 0.3;
    const auto masks = draw_hidden_masks(c.config, mask_rng, c.batch.rows());
    Graph g;
    const auto values = bind_parameters(g, c.params);
    std::vector<Value> mask_values;
    for (const auto& m : masks) mask_values.push_back(g.leaf(m.as_tensor()));
    const Value out = mlp_forward(g, c.config, values, g.leaf(c.batch.inputs),
                                  mask_values);
    const Value loss = nll_node(g, out, c.batch.labels);
    const auto grads = g.backward(loss);
    std::vector<double> all{g.scalar_value(loss)};
    for (const Value v : values)
      for (double gv : grads.at(v).values) all.push_back(gv);
    return all;
  };
  REQUIRE(run() == run());
}

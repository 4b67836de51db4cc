#include "support.hpp"

#include "intradist/io.hpp"
#include "intradist/sensitivity.hpp"

using namespace intradist;
using testsupport::fresh_temp_dir;
using testsupport::random_mlp_case;

namespace {

std::vector<Batch> toy_pool(const Dataset& data, int batches, std::int64_t batch_size) {
  return sample_batch_pool(data, 2024, batches, batch_size);
}

}  // namespace

TEST_CASE("approx sensitivity hand values") {
  ParameterVector p;
  p.segments.push_back({"w", Tensor({1}, {2.0})});
  const std::vector<double> grad{0.3};
  REQUIRE(approx_sensitivity(p, grad, ParameterSubset::of({0}, 1)) ==
          Catch::Approx(0.6).epsilon(1e-15));

  const std::vector<double> zero_grad{0.0};
  REQUIRE(approx_sensitivity(p, zero_grad, ParameterSubset::of({0}, 1)) == 0.0);

  const std::vector<double> too_long{0.3, 0.1};
  REQUIRE_THROWS_AS(approx_sensitivity(p, too_long, ParameterSubset::of({0}, 1)),
                    std::invalid_argument);
}

TEST_CASE("exact sensitivity of an already-zero subset is zero") {
  RngStream rng(5, 0);
  auto c = random_mlp_case(rng, true);
  c.params.set(0, 0.0);
  const std::vector<Batch> pool{c.batch};
  REQUIRE(exact_sensitivity(c.config, c.params, ParameterSubset::of({0}, c.params.total_count()),
                            pool) == 0.0);
}

TEST_CASE("exact sensitivity of the full subset reaches the uniform loss") {
  const Dataset data = make_classification(64, 4, 4, 2.0, 7);
  MlpConfig config;
  config.input_dim = 4;
  config.hidden_dims = {8};
  config.output_dim = 4;
  config.task = TaskKind::classification;
  RngStream rng(3, 0);
  const ParameterVector params = init_mlp(config, rng);
  const auto pool = toy_pool(data, 5, 16);

  std::vector<std::int64_t> all(static_cast<std::size_t>(params.total_count()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
  const double sens = exact_sensitivity(config, params,
                                        ParameterSubset::of(all, params.total_count()),
                                        pool);
  const double base = mean_task_loss(config, params, pool);
  REQUIRE(sens == Catch::Approx(std::abs(base - std::log(4.0))).epsilon(1e-12));
}

TEST_CASE("exact sensitivity equals a from-scratch recomputation") {
  RngStream rng(11, 0);
  const auto c = random_mlp_case(rng, true);
  const std::vector<Batch> pool{c.batch};
  const auto subset = ParameterSubset::of({1, 4, 7}, c.params.total_count());
  const double got = exact_sensitivity(c.config, c.params, subset, pool);

  // Brute-force oracle: recompute both losses directly.
  const Tensor full_out = mlp_forward_eval(c.config, c.params, c.batch.inputs);
  const Tensor zero_out_t =
      mlp_forward_eval(c.config, zero_out(c.params, subset), c.batch.inputs);
  const double want = std::abs(task_loss(full_out, c.batch.labels) -
                               task_loss(zero_out_t, c.batch.labels));
  REQUIRE(got == want);
}

TEST_CASE("empty subset or batch pool is rejected") {
  RngStream rng(13, 0);
  const auto c = random_mlp_case(rng, true);
  const std::vector<Batch> pool{c.batch};
  REQUIRE_THROWS_AS(
      exact_sensitivity(c.config, c.params, ParameterSubset::of({}, 1), pool),
      std::invalid_argument);
  REQUIRE_THROWS_AS(mean_task_loss(c.config, c.params, {}), std::invalid_argument);
}

TEST_CASE("first-order approximation tightens as the parameter shrinks") {
  const Dataset data = make_classification(128, 6, 3, 2.5, 19);
  MlpConfig config;
  config.input_dim = 6;
  config.hidden_dims = {10};
  config.output_dim = 3;
  config.task = TaskKind::classification;
  RngStream rng(7, 0);
  const ParameterVector params = init_mlp(config, rng);
  const auto pool = toy_pool(data, 8, 16);

  RngStream pick(99, 0);
  std::vector<double> gaps_prev;
  bool first = true;
  double prev_median = 0.0;
  for (const double eps : {1e-1, 1e-2, 1e-3}) {
    std::vector<double> gaps;
    RngStream pick_eps(99, 0);  // same subsets for every epsilon
    for (int trial = 0; trial < 50; ++trial) {
      const auto idx = static_cast<std::int64_t>(
          pick_eps.next_index(static_cast<std::uint64_t>(params.total_count())));
      ParameterVector scaled = params;
      scaled.set(idx, params.get(idx) * eps);
      const auto subset = ParameterSubset::of({idx}, params.total_count());
      const double exact = exact_sensitivity(config, scaled, subset, pool);
      const auto grad = mean_task_gradient(config, scaled, pool);
      const double approx = approx_sensitivity(scaled, grad, subset);
      if (approx > 1e-14) gaps.push_back(std::abs(exact - approx) / approx);
    }
    std::sort(gaps.begin(), gaps.end());
    const double median = gaps[gaps.size() / 2];
    if (!first) REQUIRE(median <= prev_median);
    prev_median = median;
    first = false;
  }
  (void)gaps_prev;
}

TEST_CASE("per parameter scores of an all-zero model are zero") {
  MlpConfig config;
  config.input_dim = 3;
  config.hidden_dims = {4};
  config.output_dim = 2;
  config.task = TaskKind::classification;
  ParameterVector zeros;
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    const auto [in, out] = config.layer_dims(l);
    zeros.segments.push_back({"layer" + std::to_string(l) + ".weight",
                              Tensor::zeros({in, out})});
    zeros.segments.push_back(
        {"layer" + std::to_string(l) + ".bias", Tensor::zeros({out})});
  }
  const Dataset data = make_classification(32, 3, 2, 2.0, 3);
  const auto report = per_parameter_scores(config, zeros, toy_pool(data, 3, 8));
  for (double s : report.scores) REQUIRE(s == 0.0);
  REQUIRE(balance_std(report) == 0.0);
}

TEST_CASE("singleton score equals approx sensitivity of that singleton") {
  RngStream rng(17, 0);
  const auto c = random_mlp_case(rng, true);
  const std::vector<Batch> pool{c.batch};
  const auto report = per_parameter_scores(c.config, c.params, pool);
  const auto grad = mean_task_gradient(c.config, c.params, pool);
  for (std::int64_t i : {std::int64_t(0), std::int64_t(2), c.params.total_count() - 1}) {
    REQUIRE(report.scores[static_cast<std::size_t>(i)] ==
            approx_sensitivity(c.params, grad, ParameterSubset::of({i}, c.params.total_count())));
  }
}

TEST_CASE("balance std hand values") {
  SensitivityReport r = make_report({2.0, 2.0, 2.0}, 1, 0.0);
  REQUIRE(balance_std(r) == 0.0);
  SensitivityReport r2 = make_report({0.0, 2.0}, 1, 0.0);
  REQUIRE(balance_std(r2) == Catch::Approx(1.0).epsilon(1e-15));

  SensitivityReport permuted = make_report({2.0, 0.0}, 1, 0.0);
  REQUIRE(balance_std(permuted) == balance_std(r2));
}

TEST_CASE("summary std matches the trimmed multiset") {
  RngStream rng(19, 0);
  std::vector<double> scores(1000);
  for (double& s : scores) s = std::abs(rng.next_gaussian());
  const auto report = make_report(scores, 1, 0.01);

  const auto trimmed = trimmed_scores(scores, 0.01);
  REQUIRE(trimmed.size() == 990);
  const auto direct = summarize_scores(trimmed);
  REQUIRE(report.summary.stddev == direct.stddev);
  REQUIRE(report.summary.mean == direct.mean);
  REQUIRE(std::abs(balance_std(report) - direct.stddev) < 1e-9);
  // Full scores stay in the report regardless of trimming.
  REQUIRE(report.scores.size() == 1000);
}

TEST_CASE("top-bottom track basics") {
  SensitivityReport uniform = make_report(std::vector<double>(10, 3.0), 1, 0.0);
  const std::vector<SensitivityReport> history{uniform};
  const auto series = top_bottom_track(history, 0.2);
  REQUIRE(series.size() == 1);
  REQUIRE(series[0].top_mean == 3.0);
  REQUIRE(series[0].bottom_mean == 3.0);

  const auto all = top_bottom_track(history, 1.0);
  REQUIRE(all[0].top_mean == 3.0);  // equals the overall mean

  SensitivityReport spread = make_report({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 1, 0.0);
  const std::vector<SensitivityReport> h2{spread};
  const auto s2 = top_bottom_track(h2, 0.2);
  REQUIRE(s2[0].top_mean == Catch::Approx(9.5));   // {10, 9}
  REQUIRE(s2[0].bottom_mean == Catch::Approx(4.5));

  REQUIRE_THROWS_AS(top_bottom_track({}, 0.2), std::invalid_argument);
}

TEST_CASE("scores are reproducible for fixed seeds and batches") {
  const Dataset data = make_classification(64, 4, 2, 2.0, 23);
  MlpConfig config;
  config.input_dim = 4;
  config.hidden_dims = {6};
  config.output_dim = 2;
  config.task = TaskKind::classification;
  RngStream rng(29, 0);
  const ParameterVector params = init_mlp(config, rng);
  const auto r1 = per_parameter_scores(config, params, toy_pool(data, 4, 8));
  const auto r2 = per_parameter_scores(config, params, toy_pool(data, 4, 8));
  REQUIRE(r1.scores == r2.scores);
}

TEST_CASE("visualization sample respects trim and sampling fractions") {
  std::vector<double> scores(1000);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = static_cast<double>(i);
  const auto report = make_report(scores, 1, 0.0);
  const auto sample = visualization_sample(report, 0.01, 0.10, 5);
  REQUIRE(sample.size() == 99);  // 990 kept, 10% sampled
  for (double v : sample) REQUIRE(v < 990.0);  // top 1% never appears

  const auto all = visualization_sample(report, 0.0, 1.0, 5);
  REQUIRE(all.size() == 1000);
}

TEST_CASE("report exports round-trip") {
  const auto dir = fresh_temp_dir("sens");
  MlpConfig config;
  config.input_dim = 3;
  config.hidden_dims = {4};
  config.output_dim = 2;
  config.task = TaskKind::classification;
  RngStream rng(31, 0);
  const ParameterVector params = init_mlp(config, rng);
  const Dataset data = make_classification(32, 3, 2, 2.0, 5);
  const auto report = per_parameter_scores(config, params, toy_pool(data, 3, 8));

  write_scores_csv(dir / "scores.csv", report, params);
  const auto back = read_scores_csv(dir / "scores.csv");
  REQUIRE(back == report.scores);

  write_summary_txt(dir / "summary.txt", report);
  REQUIRE(read_summary_field(dir / "summary.txt", "std") ==
          Catch::Approx(report.summary.stddev).epsilon(1e-15));

  write_histogram_csv(dir / "hist.csv", report.scores, 10);
  const auto lines = read_lines(dir / "hist.csv");
  REQUIRE(lines.size() == 11);
  std::int64_t total = 0;
  for (std::size_t i = 1; i < lines.size(); ++i)
    total += std::stoll(split_line(lines[i])[2]);
  REQUIRE(total == static_cast<std::int64_t>(report.scores.size()));
  std::filesystem::remove_all(dir);
}

#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "nmf/errors.hpp"
#include "nmf/eval.hpp"

using namespace nmf;

namespace {

TrainedModel mean_field_model(const Eigen::MatrixXd& A, double T = 10.0, int steps = 200) {
  TrainedModel m;
  m.theta = ThetaD::zeros(A.rows());
  m.theta.A = A;
  m.integrator = {Method::RK4, steps, T};
  return m;
}

Eigen::MatrixXd random_rates(int n, std::uint64_t seed) {
  Rng rng = substream(seed, "eval");
  std::uniform_real_distribution<double> u(0, 1), r(0.1, 1);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (i != j && u(rng) < 0.4) A(i, j) = r(rng);
  return A;
}

ProbCurve curve(std::vector<double> grid, Eigen::MatrixXd values) { return {std::move(grid), std::move(values)}; }

}  // namespace

TEST_CASE("estimates: saturation, frozen dynamics, single edge") {
  const auto grid = uniform_grid(10.0, 10);
  const auto full = estimate_probs(mean_field_model(random_rates(5, 1)), {0, 1, 2, 3, 4}, grid);
  CHECK((full.values.array() == 1.0).all());

  const auto frozen = estimate_probs(mean_field_model(Eigen::MatrixXd::Zero(4, 4)), {2}, grid);
  for (Eigen::Index l = 0; l < 10; ++l) CHECK(frozen.values.row(l) == indicator(4, {2}).transpose());

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(1, 0) = 0.4;
  const auto edge = estimate_probs(mean_field_model(A), {0}, grid);
  for (std::size_t l = 0; l < grid.size(); ++l)
    CHECK(edge.values(l, 1) == doctest::Approx(1 - std::exp(-0.4 * grid[l])).epsilon(1e-9));

  CHECK_THROWS_AS(estimate_probs(mean_field_model(A), {0}, {11.0}), InvalidArgument);
}

TEST_CASE("estimates are clamped to [0, 1]") {
  TrainedModel m = mean_field_model(random_rates(4, 2));
  m.theta.mlp.b2.setConstant(1.0);  // memory term pushes x past 1
  const auto c = estimate_probs(m, {0}, uniform_grid(10.0, 10));
  CHECK(c.values.maxCoeff() <= 1.0);
  CHECK(c.values.minCoeff() >= 0.0);
}

TEST_CASE("influence") {
  const auto m = mean_field_model(random_rates(6, 3));
  CHECK(influence(m, {0, 1, 2, 3, 4, 5}, 5.0) == 6.0);
  CHECK(influence(m, {1, 4}, 0.0) == 2.0);
  double last = 0;
  for (int k = 0; k <= 20; ++k) {
    const double s = influence(m, {1}, 0.5 * k);
    CHECK(s >= last - 1e-12);
    last = s;
  }
}

TEST_CASE("MAE metrics") {
  Eigen::MatrixXd x(2, 4);
  x << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8;
  const auto same = mae_metrics(curve({1, 2}, x), curve({1, 2}, x));
  CHECK(same[0].prob_mae == 0.0);
  CHECK(same[1].scaled_inf_mae == 0.0);

  const double c = 0.05;
  const auto shifted = mae_metrics(curve({1, 2}, (x.array() + c).matrix()), curve({1, 2}, x));
  CHECK(shifted[0].prob_mae == doctest::Approx(c));
  CHECK(shifted[0].scaled_inf_mae == doctest::Approx(c));
  CHECK(shifted[0].inf_mae == doctest::Approx(4 * c));

  Eigen::MatrixXd y = x;
  y(0, 0) += c;
  y(0, 1) -= c;
  const auto cancel = mae_metrics(curve({1, 2}, y), curve({1, 2}, x));
  CHECK(cancel[0].prob_mae == doctest::Approx(2 * c / 4));
  CHECK(cancel[0].scaled_inf_mae == doctest::Approx(0.0));

  const auto back = mae_metrics(curve({1, 2}, x), curve({1, 2}, y));
  CHECK(back[0].prob_mae == cancel[0].prob_mae);
  CHECK_THROWS_AS(mae_metrics(curve({1, 3}, x), curve({1, 2}, x)), InvalidArgument);

  const auto mean = mean_mae(shifted);
  CHECK(mean.prob_mae == doctest::Approx(c));
  std::ostringstream out;
  write_mae_csv(out, shifted);
  CHECK(out.str().rfind("t,prob_mae,scaled_inf_mae\n", 0) == 0);
}

TEST_CASE("network metrics") {
  const Eigen::MatrixXd A = random_rates(6, 4);
  const EdgeSet E = threshold_edges(A, 0.01);
  auto self = network_metrics(E, E, A, A);
  CHECK(self.prc == 1.0);
  CHECK(self.rcl == 1.0);
  CHECK(self.acc == 1.0);
  CHECK(self.cor == doctest::Approx(1.0));

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(6, 6), C = Eigen::MatrixXd::Zero(6, 6);
  B(1, 0) = 0.5;
  C(0, 1) = 0.5;
  const auto disjoint = network_metrics(threshold_edges(B, 0.01), threshold_edges(C, 0.01), B, C);
  CHECK(disjoint.prc == 0.0);
  CHECK(disjoint.rcl == 0.0);
  CHECK(disjoint.acc == 0.0);
  CHECK(disjoint.cor == 0.0);

  CHECK(network_metrics(E, E, A, 2 * A).cor == doctest::Approx(1.0));

  // Prc divides by the true set, Rcl by the learned one.
  const EdgeSet learned{{0, 1}, {0, 2}}, truth{{0, 1}, {0, 2}, {0, 3}, {1, 2}};
  const auto pr = network_metrics(learned, truth, A, A);
  CHECK(pr.prc == doctest::Approx(0.5));
  CHECK(pr.rcl == doctest::Approx(1.0));
  CHECK(pr.acc == doctest::Approx(1 - 2.0 / 6));

  const Eigen::MatrixXd A2 = random_rates(6, 5);
  const EdgeSet E2 = threshold_edges(A2, 0.01);
  const auto ab = network_metrics(E, E2, A, A2), ba = network_metrics(E2, E, A2, A);
  CHECK(ab.cor == doctest::Approx(ba.cor));
  CHECK(network_metrics(E, E2, 3 * A, A2).cor == doctest::Approx(ab.cor));
  for (double v : {ab.prc, ab.rcl, ab.acc, ab.cor}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  const auto empty = network_metrics({}, {}, Eigen::MatrixXd::Zero(6, 6), A);
  CHECK(std::isnan(empty.prc));
  CHECK(std::isnan(empty.rcl));
  CHECK(std::isnan(empty.cor));
  CHECK(empty.warnings.size() >= 3);
  const auto j = nlohmann::json::parse(inference_metrics_json(empty));
  CHECK(j["prc"].is_null());
  CHECK(j.contains("warnings"));

  CHECK_THROWS_AS(network_metrics(E, E, A, Eigen::MatrixXd::Zero(5, 5)), InvalidArgument);
}

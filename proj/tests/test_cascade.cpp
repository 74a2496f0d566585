#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nmf/cascade.hpp"
#include "nmf/errors.hpp"
#include "oracles.hpp"

using namespace nmf;

namespace {

DiffusionNetwork single_edge(double alpha) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(1, 0) = alpha;
  return DiffusionNetwork(A);
}

DiffusionNetwork chain3(double a, double b) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 3);
  A(1, 0) = a;
  A(2, 1) = b;
  return DiffusionNetwork(A);
}

DiffusionNetwork random_net(int n, double density, std::uint64_t seed) {
  Rng rng = substream(seed, "test-net");
  std::uniform_real_distribution<double> unit(0, 1), rate(0.1, 1.0);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (i != j && unit(rng) < density) A(i, j) = rate(rng);
  return DiffusionNetwork(A);
}

bool nondecreasing(const ProbCurve& c) {
  for (Eigen::Index l = 1; l < c.values.rows(); ++l)
    if ((c.values.row(l) - c.values.row(l - 1)).minCoeff() < -1e-12) return false;
  return true;
}

}  // namespace

TEST_CASE("exponential delays have mean 1/alpha") {
  Rng rng(17);
  const double alpha = 0.4;
  const int N = 1000000;
  double sum = 0;
  for (int k = 0; k < N; ++k) {
    const double t = sample_delay(Exponential{alpha}, rng);
    REQUIRE(t > 0.0);
    sum += t;
  }
  CHECK(std::abs(sum / N - 1 / alpha) <= 3 * (1 / alpha) / std::sqrt(N));
}

TEST_CASE("rayleigh delays have median sqrt(2 ln 2 / alpha)") {
  Rng rng(18);
  const double alpha = 0.7;
  const int N = 1000000;
  std::vector<double> t(N);
  for (auto& v : t) v = sample_delay(Rayleigh{alpha}, rng);
  std::nth_element(t.begin(), t.begin() + N / 2, t.end());
  const double median = std::sqrt(2 * std::log(2.0) / alpha);
  const double density = alpha * median * std::exp(-alpha * median * median / 2);
  CHECK(std::abs(t[N / 2] - median) <= 3 / (2 * density * std::sqrt(N)));
}

TEST_CASE("weibull delays have mean scale * Gamma(1 + 1/shape)") {
  Rng rng(19);
  const double k = 2.5, lambda = 3.0;
  const int N = 400000;
  double sum = 0;
  for (int i = 0; i < N; ++i) sum += sample_delay(Weibull{k, lambda}, rng);
  const double mean = lambda * std::tgamma(1 + 1 / k);
  const double sd = lambda * std::sqrt(std::tgamma(1 + 2 / k) - std::pow(std::tgamma(1 + 1 / k), 2));
  CHECK(std::abs(sum / N - mean) <= 3 * sd / std::sqrt(N));
}

TEST_CASE("delay law validation") {
  CHECK_THROWS_AS(validate(DelayLaw{Exponential{0.0}}), InvalidArgument);
  CHECK_THROWS_AS(validate(DelayLaw{Weibull{1.0, -1.0}}), InvalidArgument);
  CHECK_NOTHROW(validate(DelayLaw{Rayleigh{0.3}}));
  CHECK(parse_delay_kind("wbl") == DelayKind::Weibull);
  CHECK_THROWS_AS(parse_delay_kind("gamma"), InvalidArgument);
}

TEST_CASE("sources are infected at 0 and unreachable nodes never") {
  const auto net = single_edge(1.0);
  Rng rng(3);
  const Cascade c = simulate_cascade(net, {1}, 10.0, DelayModel::exponential(), rng);
  CHECK(c.times[1] == 0.0);
  CHECK(c.times[0] == kNever);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("single-edge first passage follows 1 - exp(-alpha t)") {
  const double alpha = 0.6;
  const auto net = single_edge(alpha);
  const int N = 100000;
  const std::vector<double> ts{0.5, 1.0, 2.0, 4.0};
  std::vector<int> hits(ts.size(), 0);
  for (int k = 0; k < N; ++k) {
    Rng rng = substream(5, "edge", k);
    const Cascade c = simulate_cascade(net, {0}, 10.0, DelayModel::exponential(), rng);
    for (std::size_t q = 0; q < ts.size(); ++q) hits[q] += c.times[1] <= ts[q];
  }
  for (std::size_t q = 0; q < ts.size(); ++q) {
    const double p = 1 - std::exp(-alpha * ts[q]);
    CHECK(std::abs(hits[q] / double(N) - p) <= 3 * std::sqrt(p * (1 - p) / N));
  }
}

TEST_CASE("event-queue times equal shortest paths over the sampled delays") {
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 9;
    const auto net = random_net(n, 0.35, 100 + trial);
    Rng rng = substream(trial, "delays");
    std::exponential_distribution<double> exp1(1.0);
    Eigen::MatrixXd D = Eigen::MatrixXd::Constant(n, n, oracle::kInf);
    for (const auto& e : net.edges()) D(e.src, e.dst) = exp1(rng) / net.rate(e.src, e.dst);
    const std::vector<NodeId> src{trial % n, (trial + 4) % n};
    const double T = 2.0;
    const Cascade c = simulate_cascade(net, src, T, [&](NodeId s, NodeId d) { return D(s, d); });
    const auto ref = oracle::shortest_paths(D, {src.begin(), src.end()});
    for (int i = 0; i < n; ++i) {
      const double expect = ref[i] <= T ? ref[i] : kNever;
      CHECK(c.times[i] == expect);
    }
  }
}

TEST_CASE("build_dataset counts, determinism and thread independence") {
  const auto net = random_net(12, 0.3, 1);
  const auto a = build_dataset(net, DelayModel::exponential(), {900, 1, 10}, 10, 20.0, 42, 1);
  CHECK(a.cascades.size() == 9000);
  for (const auto& c : a.cascades) {
    CHECK(c.source.size() >= 1);
    CHECK(c.source.size() <= 10);
  }
  const auto b = build_dataset(net, DelayModel::exponential(), {900, 1, 10}, 10, 20.0, 42, 3);
  std::ostringstream sa, sb;
  write_cascades(sa, a);
  write_cascades(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(build_dataset(net, DelayModel::exponential(), {0, 1, 10}, 10, 20.0, 42).cascades.empty());
  CHECK_THROWS_AS(build_dataset(net, DelayModel::exponential(), {5, 1, 13}, 1, 20.0, 42), InvalidArgument);
}

TEST_CASE("Monte-Carlo estimates: sources saturate, empty networks stay put") {
  const auto grid = uniform_grid(5.0, 5);
  const auto mc = estimate_probs_mc(single_edge(1.0), DelayModel::exponential(), {0}, grid, 200, 1);
  for (Eigen::Index l = 0; l < 5; ++l) CHECK(mc.curve.values(l, 0) == 1.0);
  CHECK(mc.std_error.col(0).isZero());
  for (Eigen::Index l = 0; l < 5; ++l) {
    const double p = mc.curve.values(l, 1);
    CHECK(mc.std_error(l, 1) == doctest::Approx(std::sqrt(p * (1 - p) / 200)));
  }
  const auto empty = estimate_probs_mc(DiffusionNetwork(3), DelayModel::exponential(), {1}, grid, 50, 1);
  for (Eigen::Index l = 0; l < 5; ++l) CHECK(empty.curve.values.row(l) == indicator(3, {1}).transpose());
}

TEST_CASE("CTMC oracle closed forms") {
  const auto grid = uniform_grid(6.0, 12);
  const double a = 0.7, b = 0.3;
  const auto two = exact_probs_ctmc(single_edge(a), {0}, grid);
  const auto three = exact_probs_ctmc(chain3(a, b), {0}, grid);
  for (std::size_t l = 0; l < grid.size(); ++l) {
    CHECK(two.values(l, 1) == doctest::Approx(1 - std::exp(-a * grid[l])).epsilon(1e-9));
    CHECK(three.values(l, 2) == doctest::Approx(oracle::hypoexponential_cdf(a, b, grid[l])).epsilon(1e-9));
  }
  const auto all = exact_probs_ctmc(random_net(5, 0.5, 2), {0, 1, 2, 3, 4}, grid);
  CHECK((all.values.array() == 1.0).all());
}

TEST_CASE("hypoexponential closed form agrees with simulation") {
  const double a = 0.7, b = 0.3, t = 5.0;
  const int N = 100000;
  int hits = 0;
  for (int k = 0; k < N; ++k) {
    Rng rng = substream(8, "chain", k);
    hits += simulate_cascade(chain3(a, b), {0}, 10.0, DelayModel::exponential(), rng).times[2] <= t;
  }
  const double p = oracle::hypoexponential_cdf(a, b, t);
  CHECK(std::abs(hits / double(N) - p) <= 3 * std::sqrt(p * (1 - p) / N));
}

TEST_CASE("CTMC conserves mass, is monotone, and has capacity limits") {
  const auto grid = uniform_grid(20.0, 20);
  const auto r = exact_probs_ctmc_detail(random_net(10, 0.3, 4), {2}, grid);
  for (double m : r.total_mass) CHECK(std::abs(m - 1.0) <= 1e-9);
  CHECK(nondecreasing(r.curve));
  CHECK_THROWS_AS(exact_probs_ctmc(DiffusionNetwork(15), {0}, grid), CapacityError);
  CHECK_THROWS_AS(exact_probs_ctmc(single_edge(1.0), DelayModel::rayleigh(), {0}, grid), UnsupportedLaw);
}

TEST_CASE("adding an edge never lowers CTMC infection probabilities") {
  const auto grid = uniform_grid(10.0, 10);
  for (int trial = 0; trial < 5; ++trial) {
    const auto net = random_net(7, 0.25, 50 + trial);
    Eigen::MatrixXd A = net.transmission();
    const int s = trial % 7, d = (trial + 3) % 7;
    A(d, s) += 0.5;
    const auto before = exact_probs_ctmc(net, {0}, grid);
    const auto after = exact_probs_ctmc(DiffusionNetwork(A), {0}, grid);
    CHECK((after.values - before.values).minCoeff() >= -1e-12);
  }
}

TEST_CASE("full z-ODE oracle matches the CTMC") {
  const auto grid = uniform_grid(20.0, 20);
  for (int trial = 0; trial < 4; ++trial) {
    const auto net = random_net(6, 0.35, 200 + trial);
    const std::vector<NodeId> src{trial % 6};
    const auto z = full_z_ode_oracle(net, src, grid);
    const auto c = exact_probs_ctmc(net, src, grid);
    CHECK((z.curve.values - c.values).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(z.e0.isZero());
    CHECK(nondecreasing(z.curve));
  }
  const auto zero = full_z_ode_oracle(DiffusionNetwork(4), {1, 3}, grid);
  for (Eigen::Index l = 0; l < zero.curve.values.rows(); ++l)
    CHECK(zero.curve.values.row(l) == indicator(4, {1, 3}).transpose());
  CHECK(zero.e.isZero());
  CHECK_THROWS_AS(full_z_ode_oracle(DiffusionNetwork(11), {0}, grid), CapacityError);
}

TEST_CASE("cascade JSONL round trip and format") {
  Cascade c;
  c.source = {0};
  c.horizon = 20;
  c.times = {0.0, 1.2, 0.7, kNever};
  const std::string line = cascade_to_json(c);
  CHECK(line == R"({"events":[[2,0.7],[1,1.2]],"horizon":20.0,"source":[0]})");
  const Cascade back = cascade_from_json(line, 4);
  CHECK(back.times == c.times);
  CHECK(back.source == c.source);

  CascadeSet set{4, 20.0, {c, c}};
  std::ostringstream out;
  write_cascades(out, set);
  std::istringstream in(out.str());
  const auto read = read_cascades(in);
  CHECK(read.n == 3);  // largest id seen is 2
  std::istringstream in2(out.str());
  CHECK(read_cascades(in2, 4).n == 4);

  std::istringstream bad(R"({"source":[0],"events":[[1,0.5],[1,0.7]],"horizon":2})");
  CHECK_THROWS_AS(read_cascades(bad), ParseError);
  std::istringstream late(R"({"source":[0],"events":[[1,5]],"horizon":2})");
  CHECK_THROWS_AS(read_cascades(late), ParseError);
  std::istringstream mixed("{\"source\":[0],\"events\":[],\"horizon\":2}\n{\"source\":[0],\"events\":[],\"horizon\":3}\n");
  CHECK_THROWS_AS(read_cascades(mixed), ParseError);
}

TEST_CASE("cascade validation") {
  Cascade c;
  c.source = {0};
  c.horizon = 5;
  c.times = {0.0, 1.0, 1.0};
  CHECK_THROWS_AS(c.validate(), DataError);
  c.times = {0.0, 1.0, 6.0};
  CHECK_THROWS_AS(c.validate(), DataError);
  c.times = {0.5, 1.0, kNever};
  CHECK_THROWS_AS(c.validate(), DataError);
}

TEST_CASE("ProbCurve CSV round trip") {
  ProbCurve c;
  c.grid = {1, 2};
  c.values.resize(2, 3);
  c.values << 0.1, 0.2, 1.0 / 3, 0.4, 0.5, 0.6;
  std::ostringstream out;
  write_prob_curve(out, c);
  CHECK(out.str().rfind("t,x0,x1,x2\n", 0) == 0);
  std::istringstream in(out.str());
  const auto back = read_prob_curve(in);
  CHECK(back.grid == c.grid);
  CHECK(back.values == c.values);
}

TEST_CASE("uniform grid") {
  const auto g = uniform_grid(20.0, 20);
  REQUIRE(g.size() == 20);
  CHECK(g.front() == 1.0);
  CHECK(g.back() == 20.0);
}

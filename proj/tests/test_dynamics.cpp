#include <doctest.h>

#include <cmath>

#include "nmf/errors.hpp"
#include "nmf/training.hpp"
#include "oracles.hpp"

using namespace nmf;
using V = Eigen::VectorXd;

namespace {

ThetaD random_theta(int n, std::uint64_t seed) {
  Rng rng = substream(seed, "theta");
  ThetaD t = initial_theta(n, rng);
  std::uniform_real_distribution<double> a(0.05, 0.5), k(0.05, 0.6), sym(-1, 1);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (i != j) t.A(i, j) = a(rng);
  for (int i = 0; i < n; ++i) {
    t.kernel.B(i) = k(rng);
    t.kernel.C(i) = k(rng);
  }
  t.mlp.W2 *= 0.5;
  t.mlp.b2.setConstant(0.5);  // keeps the memory output away from the clamp
  return t;
}

V random_vec(int size, std::uint64_t seed, double lo, double hi) {
  Rng rng = substream(seed, "vec");
  std::uniform_real_distribution<double> u(lo, hi);
  V v(size);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<bool> a_diagonal_mask(int n) {
  std::vector<bool> skip(static_cast<std::size_t>(ThetaLayout(n).size()), false);
  for (int i = 0; i < n; ++i) skip[static_cast<std::size_t>(i * (n + 1))] = true;
  return skip;
}

}  // namespace

TEST_CASE("mean-field drift hand values") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(1, 0) = 0.5;
  CHECK(f_meanfield<double>(V::Zero(2), A).isZero());
  CHECK(f_meanfield<double>(V::Ones(2), A).isZero());
  const V f = f_meanfield<double>(V::Unit(2, 0), A);
  CHECK(f(0) == 0.0);
  CHECK(f(1) == 0.5);
}

TEST_CASE("memory network output range") {
  const int n = 4;
  ThetaD t = ThetaD::zeros(n);
  CHECK(eps_net<double>(V::Ones(n), V::Ones(n), t.mlp).isZero());
  t.mlp.b2.setConstant(10);
  CHECK(eps_net<double>(V::Zero(n), V::Zero(n), t.mlp) == V::Ones(n));
  const ThetaD r = random_theta(n, 3);
  for (int k = 0; k < 50; ++k) {
    ThetaD big = r;
    big.mlp.W2 *= 20;
    const V e = eps_net<double>(random_vec(n, k, -2, 2), random_vec(n, k + 100, -2, 2), big.mlp);
    CHECK(e.minCoeff() >= 0.0);
    CHECK(e.maxCoeff() <= 1.0);
  }
  CHECK(elu(0.0) == 0.0);
  CHECK(elu_grad(0.0) == 1.0);
  CHECK(elu(-1.0) == doctest::Approx(std::exp(-1.0) - 1));
}

TEST_CASE("memory network directional derivative matches finite differences") {
  const int n = 5;
  const ThetaD t = random_theta(n, 4);
  const V m = random_vec(2 * n, 1, 0.1, 0.9), v = random_vec(2 * n, 2, -1, 1);
  auto eps = [&](const V& mm) { return V(eps_net<double>(mm.head(n), mm.tail(n), t.mlp)); };
  ThetaD no_mean = t;
  no_mean.A.setZero();
  no_mean.kernel.B.setZero();
  no_mean.kernel.C.setZero();
  const V analytic = jac_g_m_jvp<double>(m, no_mean, v).head(n);
  CHECK(oracle::rel_err(analytic, oracle::central_directional(eps, m, v, 1e-6)) <= 1e-6);
}

TEST_CASE("g reduces to mean-field without memory") {
  const int n = 3;
  ThetaD t = ThetaD::zeros(n);
  t.A = random_theta(n, 5).A;
  const V chi = indicator(n, {1});
  const V g = g_dynamics<double>(initial_state<double>(chi), t);
  CHECK(g.head(n) == f_meanfield<double>(chi, t.A));
  CHECK(g.tail(n).isZero());
  t.kernel.B.setConstant(0.7);
  t.kernel.C.setConstant(0.2);
  V m(2 * n);
  m << V::Ones(n), V::Constant(n, 0.4);
  const V gs = g_dynamics<double>(m, t);
  CHECK(gs.head(n).isZero());
  CHECK(gs.tail(n).isApprox(V::Constant(n, 0.7 - 0.2 * 0.4)));
}

TEST_CASE("single-edge mean-field solution is 1 - exp(-alpha t)") {
  ThetaD t = ThetaD::zeros(2);
  const double alpha = 0.8;
  t.A(1, 0) = alpha;
  auto field = [&](double, const V& m) { return g_dynamics<double>(m, t); };
  const std::vector<double> cps{1, 2, 3};
  const auto traj = integrate_forward<double>(field, initial_state<double>(indicator(2, {0})),
                                              {Method::RK4, 400, 4.0}, cps);
  for (double s : cps) CHECK(traj.at(s)(1) == doctest::Approx(1 - std::exp(-alpha * s)).epsilon(1e-10));
}

TEST_CASE("state Jacobian products: linearity, duality, finite differences") {
  const int n = 6;
  const ThetaD t = random_theta(n, 6);
  const V m = random_vec(2 * n, 3, 0.05, 0.95);
  CHECK(jac_g_m_vjp<double>(m, t, V::Zero(2 * n)).isZero());
  for (int k = 0; k < 10; ++k) {
    const V p = random_vec(2 * n, 10 + k, -1, 1), v = random_vec(2 * n, 30 + k, -1, 1);
    const double lhs = p.dot(jac_g_m_jvp<double>(m, t, v));
    const double rhs = jac_g_m_vjp<double>(m, t, p).dot(v);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
    auto g = [&](const V& mm) { return g_dynamics<double>(mm, t); };
    CHECK(oracle::rel_err(jac_g_m_jvp<double>(m, t, v), oracle::central_directional(g, m, v, 1e-6)) <= 1e-6);
  }
  const V s = random_vec(n, 7, -1, 1);
  V ps = V::Zero(2 * n);
  ps.head(n) = s;
  CHECK(jac_gx_x_vjp<double>(m, t, s) == jac_g_m_vjp<double>(m, t, ps).head(n));
}

TEST_CASE("parameter Jacobian products") {
  const int n = 2;
  ThetaD t = ThetaD::zeros(n);
  t.A(1, 0) = 0.3;
  t.A(0, 1) = 0.6;
  V m(4);
  m << 0.2, 0.7, 0.1, 0.3;
  V p = V::Zero(4);
  CHECK(grad_g_theta_vjp<double>(m, t, p).isZero());
  // d g_i / d A(i, j) = x_j (1 - x_i)
  p(1) = 1;
  const V gA = grad_g_theta_vjp<double>(m, t, p);
  CHECK(gA(1) == doctest::Approx(0.2 * (1 - 0.7)));  // A(1, 0), column-major
  CHECK(gA(0) == 0.0);
  CHECK(gA(3) == 0.0);

  for (int trial = 0; trial < 3; ++trial) {
    const int nn = 5;
    const ThetaD r = random_theta(nn, 40 + trial);
    const V mm = random_vec(2 * nn, 50 + trial, 0.05, 0.95), pp = random_vec(2 * nn, 60 + trial, -1, 1);
    auto f = [&](const V& flat) { return pp.dot(g_dynamics<double>(mm, ThetaD::unflatten(flat))); };
    const V fd = oracle::central_gradient(f, r.flatten(), 1e-6, a_diagonal_mask(nn));
    CHECK(oracle::rel_err(grad_g_theta_vjp<double>(mm, r, pp), fd) <= 1e-6);
  }
}

TEST_CASE("log-component gradients") {
  const int n = 4;
  const ThetaD t = random_theta(n, 8);
  const V m = random_vec(2 * n, 9, 0.05, 0.6);
  for (int i = 0; i < n; ++i) {
    const auto lg = grad_log_component<double>(m, t, i);
    REQUIRE_FALSE(lg.floored);
    auto fm = [&](const V& mm) { return std::log(g_dynamics<double>(mm, t)(i)); };
    auto ft = [&](const V& flat) { return std::log(g_dynamics<double>(m, ThetaD::unflatten(flat))(i)); };
    CHECK(oracle::rel_err(lg.d_m, oracle::central_gradient(fm, m, 1e-6)) <= 1e-6);
    CHECK(oracle::rel_err(lg.d_theta, oracle::central_gradient(ft, t.flatten(), 1e-6, a_diagonal_mask(n))) <= 1e-6);
  }

  // g_0 = 1 exactly: log-gradient equals the plain gradient.
  ThetaD one = ThetaD::zeros(n);
  one.mlp.b2(0) = 0.5;
  one.A(0, 1) = 1.0;
  V m1 = V::Zero(2 * n);
  m1(1) = 0.5;  // f_0 = A(0,1) x_1 (1 - x_0) = 0.5, eps_0 = 0.5
  REQUIRE(g_dynamics<double>(m1, one)(0) == doctest::Approx(1.0));
  const auto lg1 = grad_log_component<double>(m1, one, 0);
  V e0 = V::Zero(2 * n);
  e0(0) = 1;
  CHECK(lg1.d_m.isApprox(jac_g_m_vjp<double>(m1, one, e0)));

  // Doubling g_0 through the bias-free mean-field term halves d/dx.
  ThetaD twice = one;
  twice.mlp.b2(0) = 0;
  ThetaD doubled = twice;
  doubled.A *= 2;
  const auto a = grad_log_component<double>(m1, twice, 0), b = grad_log_component<double>(m1, doubled, 0);
  CHECK(b.log_value == doctest::Approx(a.log_value + std::log(2.0)));
  CHECK(a.d_m(0) == doctest::Approx(b.d_m(0)));  // d log(c f)/dx does not depend on c

  const auto floored = grad_log_component<double>(V::Zero(2 * n), ThetaD::zeros(n), 2);
  CHECK(floored.floored);
  CHECK(floored.log_value == doctest::Approx(std::log(1e-8)));
  CHECK(floored.d_theta.isZero());
  CHECK_THROWS_AS(grad_log_component<double>(m, t, n), InvalidArgument);
}

TEST_CASE("flatten and unflatten are inverse") {
  const ThetaD t = random_theta(7, 10);
  const V flat = t.flatten();
  CHECK(flat.size() == 4 * 49 + 4 * 7);
  const ThetaD back = ThetaD::unflatten(flat);
  CHECK(back.A == t.A);
  CHECK(back.mlp.W1 == t.mlp.W1);
  CHECK(back.mlp.W2 == t.mlp.W2);
  CHECK(back.mlp.b1 == t.mlp.b1);
  CHECK(back.mlp.b2 == t.mlp.b2);
  CHECK(back.kernel.B == t.kernel.B);
  CHECK(back.kernel.C == t.kernel.C);
  CHECK(back.flatten() == flat);
  CHECK_THROWS_AS(ThetaD::unflatten(V::Zero(10)), InvalidArgument);
}

TEST_CASE("parameter validation") {
  ThetaD t = ThetaD::zeros(3);
  CHECK_NOTHROW(t.validate());
  t.A(0, 0) = 0.1;
  CHECK_THROWS_AS(t.validate(), InvalidArgument);
  t.A(0, 0) = 0;
  t.kernel.C(1) = -1;
  CHECK_THROWS_AS(t.validate(), InvalidArgument);
  t.kernel.C(1) = 0;
  t.mlp.W1(0, 0) = std::nan("");
  CHECK_THROWS_AS(t.validate(), InvalidArgument);
}

TEST_CASE("dynamics instantiate for float") {
  const ThetaD t = random_theta(3, 11);
  const Theta<float> tf = t.cast<float>();
  const V m = random_vec(6, 12, 0.1, 0.9);
  const Eigen::VectorXf gf = g_dynamics<float>(m.cast<float>(), tf);
  CHECK((gf.cast<double>() - g_dynamics<double>(m, t)).cwiseAbs().maxCoeff() < 1e-5);
}

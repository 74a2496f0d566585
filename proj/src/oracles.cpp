// Exact ground truth for exponential-delay networks on few nodes: the master
// equation over infected sets, and the closed moment system z = [x; e].

#include <bit>
#include <cmath>

#include "nmf/cascade.hpp"
#include "nmf/errors.hpp"
#include "nmf/ode.hpp"

namespace nmf {

namespace {

constexpr int kCtmcMaxNodes = 14;
constexpr int kZOdeMaxNodes = 10;

/// RK4 with step doubling until grid values of `observe` agree to `tol`.
template <class Field, class Observe>
Eigen::MatrixXd integrate_to_tolerance(Field&& field, const Eigen::VectorXd& y0, const std::vector<double>& grid,
                                       int steps, double tol, Observe&& observe) {
  const double horizon = grid.empty() ? 0.0 : grid.back();
  auto run = [&](int s) {
    Eigen::MatrixXd out(grid.size(), observe(y0).size());
    if (horizon <= 0.0) {
      for (std::size_t l = 0; l < grid.size(); ++l) out.row(l) = observe(y0).transpose();
      return out;
    }
    IntegratorConfig cfg{Method::RK4, s, horizon};
    const auto traj = integrate_forward<double>(field, y0, cfg, std::span<const double>(grid));
    for (std::size_t l = 0; l < grid.size(); ++l) out.row(l) = observe(traj.at(grid[l])).transpose();
    return out;
  };
  Eigen::MatrixXd coarse = run(steps);
  for (int attempt = 0; attempt < 12; ++attempt) {
    steps *= 2;
    Eigen::MatrixXd fine = run(steps);
    const double diff = (fine - coarse).cwiseAbs().maxCoeff();
    coarse = std::move(fine);
    if (diff <= tol) break;
  }
  return coarse;
}

int initial_steps(const Eigen::MatrixXd& A, double horizon) {
  const double max_rate = A.rowwise().sum().maxCoeff() + A.colwise().sum().maxCoeff();
  return std::max(64, static_cast<int>(std::ceil(2.0 * max_rate * horizon)));
}

void check_grid(const std::vector<double>& grid) {
  for (std::size_t l = 0; l < grid.size(); ++l)
    if (!(grid[l] >= 0.0) || (l > 0 && grid[l] < grid[l - 1])) throw InvalidArgument("grid must be ascending in [0, T]");
}

}  // namespace

CtmcResult exact_probs_ctmc_detail(const DiffusionNetwork& net, const std::vector<NodeId>& source,
                                   const std::vector<double>& grid) {
  const int n = net.size();
  if (n > kCtmcMaxNodes) throw CapacityError("CTMC oracle supports n <= 14, got n = " + std::to_string(n));
  check_grid(grid);
  const Eigen::MatrixXd& A = net.transmission();
  const std::size_t states = std::size_t{1} << n;
  std::uint32_t src_mask = 0;
  for (NodeId s : source) {
    if (s < 0 || s >= n) throw InvalidArgument("source id out of range");
    src_mask |= 1u << s;
  }

  // rate(S, i) = sum_{j in S} A(i, j): infection pressure on i from set S.
  Eigen::MatrixXd rate = Eigen::MatrixXd::Zero(n, states);
  for (std::size_t S = 1; S < states; ++S) {
    const int low = std::countr_zero(static_cast<std::uint32_t>(S));
    rate.col(S) = rate.col(S & (S - 1)) + A.col(low);
  }
  Eigen::VectorXd out_rate = Eigen::VectorXd::Zero(states);
  for (std::size_t S = 0; S < states; ++S)
    for (int i = 0; i < n; ++i)
      if (!(S >> i & 1)) out_rate(S) += rate(i, S);

  auto field = [&](double, const Eigen::VectorXd& P) {
    Eigen::VectorXd dP = Eigen::VectorXd::Zero(states);
    for (std::size_t S = 0; S < states; ++S) {
      if ((S & src_mask) != src_mask) continue;
      double d = -P(S) * out_rate(S);
      for (int i = 0; i < n; ++i) {
        if (!(S >> i & 1) || (src_mask >> i & 1)) continue;
        const std::size_t prev = S & ~(std::size_t{1} << i);
        d += P(prev) * rate(i, prev);
      }
      dP(S) = d;
    }
    return dP;
  };
  auto observe = [&](const Eigen::VectorXd& P) {
    Eigen::VectorXd obs = Eigen::VectorXd::Zero(n + 1);
    for (std::size_t S = 0; S < states; ++S) {
      if (P(S) == 0.0) continue;
      for (int i = 0; i < n; ++i)
        if (S >> i & 1) obs(i) += P(S);
      obs(n) += P(S);
    }
    return obs;
  };
  Eigen::VectorXd P0 = Eigen::VectorXd::Zero(states);
  P0(src_mask) = 1.0;
  const double horizon = grid.empty() ? 0.0 : grid.back();
  const Eigen::MatrixXd obs = integrate_to_tolerance(field, P0, grid, initial_steps(A, horizon), 1e-11, observe);

  CtmcResult r;
  r.curve.grid = grid;
  r.curve.values = obs.leftCols(n);
  r.total_mass.assign(obs.col(n).data(), obs.col(n).data() + obs.rows());
  return r;
}

ProbCurve exact_probs_ctmc(const DiffusionNetwork& net, const std::vector<NodeId>& source,
                           const std::vector<double>& grid) {
  return exact_probs_ctmc_detail(net, source, grid).curve;
}

ProbCurve exact_probs_ctmc(const DiffusionNetwork& net, const DelayModel& delays, const std::vector<NodeId>& source,
                           const std::vector<double>& grid) {
  if (delays.kind != DelayKind::Exponential)
    throw UnsupportedLaw("CTMC oracle requires exponential delays, got " + delay_kind_name(delays.kind));
  return exact_probs_ctmc(net, source, grid);
}

ZOdeResult full_z_ode_oracle(const DiffusionNetwork& net, const std::vector<NodeId>& source,
                             const std::vector<double>& grid) {
  const int n = net.size();
  if (n > kZOdeMaxNodes) throw CapacityError("z-ODE oracle supports n <= 10, got n = " + std::to_string(n));
  check_grid(grid);
  const Eigen::MatrixXd& A = net.transmission();
  const std::size_t sets = std::size_t{1} << n;
  auto single = [](int i) { return std::size_t{1} << i; };

  // z is indexed by subset mask: z[{i}] = x_i, z[I] = e_I for |I| >= 2.
  auto field = [&](double, const Eigen::VectorXd& z) {
    Eigen::VectorXd y(sets), X(sets), dz = Eigen::VectorXd::Zero(sets);
    y(0) = 1.0;
    X(0) = 1.0;
    for (std::size_t I = 1; I < sets; ++I) {
      const int low = std::countr_zero(static_cast<std::uint32_t>(I));
      y(I) = y(I & (I - 1)) * z(single(low));
      X(I) = std::popcount(I) == 1 ? z(I) : y(I) + z(I);
    }
    // x-block: f(x; A) - (A . E) 1.
    Eigen::VectorXd xdot(n);
    for (int i = 0; i < n; ++i) {
      double d = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i || A(i, j) == 0.0) continue;
        const double xj = z(single(j)), xi = z(single(i));
        d += A(i, j) * (xj - xi * xj - z(single(i) | single(j)));
      }
      xdot(i) = d;
      dz(single(i)) = d;
    }
    // e-block: moment derivative minus the product-rule part of y_I.
    for (std::size_t I = 1; I < sets; ++I) {
      if (std::popcount(I) < 2) continue;
      double dX = 0.0, dy = 0.0;
      for (int i = 0; i < n; ++i) {
        if (!(I >> i & 1)) continue;
        const std::size_t rest = I & ~single(i);
        for (int j = 0; j < n; ++j) {
          if (j == i || A(i, j) == 0.0) continue;
          dX += A(i, j) * (X(rest | single(j)) - X(I | single(j)));
        }
        dy += y(rest) * xdot(i);
      }
      dz(I) = dX - dy;
    }
    return dz;
  };
  auto observe = [&](const Eigen::VectorXd& z) { return z; };

  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(sets);
  for (NodeId s : source) {
    if (s < 0 || s >= n) throw InvalidArgument("source id out of range");
    z0(single(s)) = 1.0;
  }
  const double horizon = grid.empty() ? 0.0 : grid.back();
  const Eigen::MatrixXd obs = integrate_to_tolerance(field, z0, grid, initial_steps(A, horizon), 1e-10, observe);

  ZOdeResult r;
  r.curve.grid = grid;
  r.curve.values.resize(grid.size(), n);
  std::vector<std::size_t> pairs;
  for (std::size_t I = 1; I < sets; ++I)
    if (std::popcount(I) >= 2) pairs.push_back(I);
  r.e.resize(grid.size(), pairs.size());
  r.e0.resize(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) r.e0(k) = z0(pairs[k]);
  for (std::size_t l = 0; l < grid.size(); ++l) {
    for (int i = 0; i < n; ++i) r.curve.values(l, i) = obs(l, single(i));
    for (std::size_t k = 0; k < pairs.size(); ++k) r.e(l, k) = obs(l, pairs[k]);
  }
  return r;
}

}  // namespace nmf

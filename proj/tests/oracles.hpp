#pragma once
// Reference computations kept independent of the library: central finite
// differences, brute-force projection, Bellman-Ford shortest paths and a few
// closed-form solutions.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Central differences of a scalar function; entries listed in `skip` are left at 0.
inline Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h, const std::vector<bool>& skip = {}) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!skip.empty() && skip[static_cast<std::size_t>(k)]) continue;
    Eigen::VectorXd plus = x, minus = x;
    plus(k) += h;
    minus(k) -= h;
    g(k) = (f(plus) - f(minus)) / (2 * h);
  }
  return g;
}

/// Central-difference Jacobian-vector product of a vector function.
inline Eigen::VectorXd central_directional(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, const Eigen::VectorXd& v, double h) {
  return (f(x + h * v) - f(x - h * v)) / (2 * h);
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& ref) {
  return (a - ref).cwiseAbs().maxCoeff() / std::max(ref.cwiseAbs().maxCoeff(), 1e-300);
}

/// Exact projection onto {u in [0,1]^n : sum u = budget} by enumerating which
/// coordinates sit at 0, at 1 or strictly inside (3^n patterns).
inline Eigen::VectorXd brute_force_projection(const Eigen::VectorXd& v, double budget) {
  const int n = static_cast<int>(v.size());
  int patterns = 1;
  for (int i = 0; i < n; ++i) patterns *= 3;
  Eigen::VectorXd best;
  double best_dist = kInf;
  std::vector<int> state(n);
  for (int code = 0; code < patterns; ++code) {
    int c = code, ones = 0, free = 0;
    double free_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      state[i] = c % 3;
      c /= 3;
      if (state[i] == 1) ++ones;
      if (state[i] == 2) {
        ++free;
        free_sum += v(i);
      }
    }
    Eigen::VectorXd u(n);
    if (free == 0) {
      if (std::abs(ones - budget) > 1e-12) continue;
    }
    const double shift = free > 0 ? (free_sum - (budget - ones)) / free : 0.0;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      u(i) = state[i] == 0 ? 0.0 : state[i] == 1 ? 1.0 : v(i) - shift;
      if (u(i) < -1e-15 || u(i) > 1 + 1e-15) ok = false;
    }
    if (!ok) continue;
    const double d = (u - v).squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = u;
    }
  }
  return best;
}

/// Multi-source shortest path distances by Bellman-Ford; D(src, dst) is the
/// edge length or kInf. Path lengths accumulate from the source outwards.
inline std::vector<double> shortest_paths(const Eigen::MatrixXd& D, const std::vector<int>& sources) {
  const int n = static_cast<int>(D.rows());
  std::vector<double> dist(n, kInf);
  for (int s : sources) dist[s] = 0.0;
  for (int round = 0; round < n; ++round)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (dist[i] + D(i, j) < dist[j]) dist[j] = dist[i] + D(i, j);
  return dist;
}

/// P(Exp(a) + Exp(b) <= t), a != b.
inline double hypoexponential_cdf(double a, double b, double t) {
  return 1.0 - (b * std::exp(-a * t) - a * std::exp(-b * t)) / (b - a);
}

// Two-node mean-field system with one edge 0 -> 1 of rate a and x(0) = u:
// x0 stays u0 and x1(t) = 1 - (1 - u1) exp(-a u0 t).
inline double single_edge_x1(double a, double u0, double u1, double t) {
  return 1.0 - (1.0 - u1) * std::exp(-a * u0 * t);
}

/// d(x0 + x1)(T)/du of the system above.
inline Eigen::Vector2d single_edge_influence_gradient(double a, double u0, double u1, double T) {
  return {1.0 + (1.0 - u1) * a * T * std::exp(-a * u0 * T), std::exp(-a * u0 * T)};
}

/// s(T) of the forward sensitivity s' = (d g_x / d x)^T s, s(0) = 1, on the same
/// system. Differs from the true gradient because the Jacobians do not commute.
inline Eigen::Vector2d single_edge_forward_sensitivity(double a, double u0, double u1, double T) {
  return {1.0 + (1.0 - u1) * (1.0 - std::exp(-2.0 * a * u0 * T)) / (2.0 * u0), std::exp(-a * u0 * T)};
}

}  // namespace oracle

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "nmf/errors.hpp"

namespace nmf {

/// Euclidean projection onto the capped simplex {u in [0,1]^n : sum(u) = budget}.
///
/// The minimizer has the form u_i = clamp(v_i - lambda, 0, 1). sum(u) is
/// piecewise linear and nonincreasing in lambda with breakpoints v_i - 1
/// (coordinate leaves the upper bound) and v_i (coordinate hits zero); the
/// breakpoints are swept in sorted order and lambda is solved exactly on the
/// segment where the sum crosses the budget.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> project_capped_simplex(
    const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar budget) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = v.size();
  if (!(budget >= Scalar(0)) || budget > Scalar(n)) throw InfeasibleError("budget must lie in [0, n]");
  if (!v.allFinite()) throw InvalidArgument("projection input must be finite");
  if (budget == Scalar(n)) return Vector::Ones(n);
  if (budget == Scalar(0)) return Vector::Zero(n);

  struct Breakpoint {
    Scalar at;
    bool enters_free;  // true at v_i - 1, false at v_i
    Eigen::Index i;
  };
  std::vector<Breakpoint> bps;
  bps.reserve(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    bps.push_back({v(i) - Scalar(1), true, i});
    bps.push_back({v(i), false, i});
  }
  std::sort(bps.begin(), bps.end(), [](const Breakpoint& a, const Breakpoint& b) {
    return a.at < b.at || (a.at == b.at && a.enters_free && !b.enters_free);
  });

  // Left of every breakpoint all coordinates sit at 1: sum = n > budget.
  Scalar at_one = Scalar(n), free_sum = Scalar(0);
  Eigen::Index free_count = 0;
  Scalar lambda = bps.front().at;
  auto sum_at = [&](Scalar lam) { return at_one + free_sum - Scalar(free_count) * lam; };
  for (std::size_t k = 0; k < bps.size(); ++k) {
    const Breakpoint& b = bps[k];
    if (b.enters_free) {
      at_one -= Scalar(1);
      free_sum += v(b.i);
      ++free_count;
    } else {
      free_sum -= v(b.i);
      --free_count;
    }
    const Scalar right = k + 1 < bps.size() ? bps[k + 1].at : b.at;
    if (sum_at(right) <= budget || k + 1 == bps.size()) {
      lambda = free_count > 0 ? (at_one + free_sum - budget) / Scalar(free_count) : b.at;
      lambda = std::clamp(lambda, b.at, std::max(b.at, right));
      break;
    }
  }
  Vector u = (v.array() - lambda).max(Scalar(0)).min(Scalar(1)).matrix();
  return u;
}

}  // namespace nmf

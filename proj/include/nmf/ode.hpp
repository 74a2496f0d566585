#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "nmf/errors.hpp"

namespace nmf {

enum class Method { Euler, RK4 };

inline Method parse_method(const std::string& name) {
  if (name == "rk4" || name == "RK4") return Method::RK4;
  if (name == "euler" || name == "Euler") return Method::Euler;
  throw InvalidArgument("unknown integrator '" + name + "'");
}

inline std::string method_name(Method m) { return m == Method::RK4 ? "rk4" : "euler"; }

/// Fixed-step explicit integration over [0, horizon] with `steps` nominal steps.
struct IntegratorConfig {
  Method method = Method::RK4;
  int steps = 40;
  double horizon = 20.0;

  void validate() const {
    if (steps < 1) throw InvalidArgument("integrator steps must be >= 1");
    if (!(horizon > 0.0)) throw InvalidArgument("integrator horizon must be > 0");
  }
  double max_step() const { return horizon / steps; }
};

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// States at the segment boundaries: 0, every checkpoint, and the horizon.
template <class Scalar>
struct Trajectory {
  std::vector<Scalar> times;
  std::vector<Vec<Scalar>> states;

  /// State at a stored time; the time must be a grid point.
  const Vec<Scalar>& at(Scalar t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.end() || *it != t) throw InvalidArgument("time is not a trajectory grid point");
    return states[static_cast<std::size_t>(it - times.begin())];
  }
  const Vec<Scalar>& final_state() const { return states.back(); }
};

/// Sorted, deduplicated segment boundaries {0} u checkpoints u {T}.
template <class Scalar>
std::vector<Scalar> segment_boundaries(const IntegratorConfig& config, std::span<const Scalar> checkpoints) {
  config.validate();
  std::vector<Scalar> b{Scalar(0), Scalar(config.horizon)};
  for (Scalar c : checkpoints) {
    if (!(c >= Scalar(0) && c <= Scalar(config.horizon)))
      throw InvalidArgument("checkpoint outside [0, T]");
    b.push_back(c);
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

/// Number of equal substeps for a segment so no step exceeds T/steps.
inline int substeps_for(double length, const IntegratorConfig& config) {
  if (length <= 0.0) return 0;
  return std::max(1, static_cast<int>(std::ceil(length / config.max_step() - 1e-9)));
}

template <class Scalar, class Field>
void euler_step(Field&& field, Scalar t, Scalar h, Vec<Scalar>& y) {
  y += h * field(t, y);
}

template <class Scalar, class Field>
void rk4_step(Field&& field, Scalar t, Scalar h, Vec<Scalar>& y) {
  const Vec<Scalar> k1 = field(t, y);
  const Vec<Scalar> k2 = field(t + h / 2, Vec<Scalar>(y + (h / 2) * k1));
  const Vec<Scalar> k3 = field(t + h / 2, Vec<Scalar>(y + (h / 2) * k2));
  const Vec<Scalar> k4 = field(t + h, Vec<Scalar>(y + h * k3));
  y += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

template <class Scalar, class Field>
void step(Method method, Field&& field, Scalar t, Scalar h, Vec<Scalar>& y) {
  if (method == Method::RK4)
    rk4_step(field, t, h, y);
  else
    euler_step(field, t, h, y);
}

/// Integrates y' = field(t, y) from a to b (either direction) with `substeps`
/// equal steps. on_step(t, y) runs before every step and may overwrite y.
template <class Scalar, class Field, class Hook>
void integrate_segment(Method method, Field&& field, Scalar a, Scalar b, int substeps, Vec<Scalar>& y, Hook&& on_step) {
  if (substeps == 0) return;
  const Scalar h = (b - a) / Scalar(substeps);
  for (int k = 0; k < substeps; ++k) {
    const Scalar t = a + h * Scalar(k);
    on_step(t, y);
    step(method, field, t, h, y);
    if (!y.allFinite()) throw DivergenceError(static_cast<double>(t + h));
  }
}

/// Forward integration from y0 at t = 0 to the horizon. Every checkpoint
/// becomes a grid point; each segment is subdivided so that no step exceeds
/// T/steps. Returns the states at the segment boundaries.
template <class Scalar, class Field>
Trajectory<Scalar> integrate_forward(Field&& field, const Vec<Scalar>& y0, const IntegratorConfig& config,
                                     std::span<const Scalar> checkpoints = {}) {
  if (!y0.allFinite()) throw DivergenceError(0.0);
  Trajectory<Scalar> traj;
  traj.times = segment_boundaries(config, checkpoints);
  traj.states.reserve(traj.times.size());
  Vec<Scalar> y = y0;
  traj.states.push_back(y);
  for (std::size_t s = 1; s < traj.times.size(); ++s) {
    const Scalar a = traj.times[s - 1], b = traj.times[s];
    integrate_segment(config.method, field, a, b, substeps_for(static_cast<double>(b - a), config), y,
                      [](Scalar, Vec<Scalar>&) {});
    traj.states.push_back(y);
  }
  return traj;
}

/// Backward integration from the terminal state at T to 0, segment by segment
/// over the event times t(1) < ... < t(m) in (0, T]. After arriving at an event
/// time t(k) the state is replaced by jump(state, k) (k is 0-based). No jump is
/// applied at t = 0. on_step(t, y) runs before each backward step.
template <class Scalar, class Field, class Jump, class Hook>
Vec<Scalar> integrate_backward_with_jumps(Field&& field, const Vec<Scalar>& terminal,
                                          std::span<const Scalar> event_times, Jump&& jump,
                                          const IntegratorConfig& config, Hook&& on_step) {
  config.validate();
  for (std::size_t k = 0; k < event_times.size(); ++k) {
    if (!(event_times[k] > Scalar(0) && event_times[k] <= Scalar(config.horizon)))
      throw InvalidArgument("event time outside (0, T]");
    if (k > 0 && !(event_times[k] > event_times[k - 1])) throw InvalidArgument("event times must increase strictly");
  }
  Vec<Scalar> y = terminal;
  Scalar upper = Scalar(config.horizon);
  for (std::size_t k = event_times.size(); k-- > 0;) {
    const Scalar lower = event_times[k];
    integrate_segment(config.method, field, upper, lower, substeps_for(static_cast<double>(upper - lower), config), y,
                      on_step);
    y = jump(static_cast<const Vec<Scalar>&>(y), k);
    if (!y.allFinite()) throw DivergenceError(static_cast<double>(lower));
    upper = lower;
  }
  integrate_segment(config.method, field, upper, Scalar(0), substeps_for(static_cast<double>(upper), config), y,
                    on_step);
  return y;
}

template <class Scalar, class Field, class Jump>
Vec<Scalar> integrate_backward_with_jumps(Field&& field, const Vec<Scalar>& terminal,
                                          std::span<const Scalar> event_times, Jump&& jump,
                                          const IntegratorConfig& config) {
  return integrate_backward_with_jumps(field, terminal, event_times, jump, config, [](Scalar, Vec<Scalar>&) {});
}

}  // namespace nmf

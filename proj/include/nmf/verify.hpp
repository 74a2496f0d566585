#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmf/cascade.hpp"
#include "nmf/training.hpp"

namespace nmf {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured error or statistic
  double threshold = 0.0;  // pass bound
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool all_passed() const;
  /// First failing check, or nullptr.
  const CheckResult* first_failure() const;
  std::string to_json() const;
};

/// Runs the self-check suites ("gradients", "oracles", "projection" or "all")
/// on random instances of size n derived from `seed`.
VerifyReport run_verification(const std::string& suite, int n, std::uint64_t seed);

/// Random smooth test problem for gradient checks: an n-node network
/// (Kronecker when n is a power of two, else Erdos-Renyi with mean degree 2), one simulated cascade with 1..5 events on
/// [0, 5], and random parameters whose clamped memory output keeps the same
/// active pattern (at least 1e-3 from the kinks) along the trajectory and
/// keep every event intensity above 1e-3.
struct GradientInstance {
  DiffusionNetwork truth;
  Cascade cascade;
  ThetaD theta;
};
GradientInstance gradient_instance(int n, std::uint64_t seed, int index);

/// True if, along the cascade's forward pass, the clamp pattern of the memory
/// output never changes (pre-clamp values stay `margin` away from 0 and 1) and
/// every event intensity is at least `margin`, i.e. the loss is smooth in theta.
bool smooth_along_cascade(const ThetaD& theta, const Cascade& cascade, const IntegratorConfig& integrator,
                         double margin);

/// max_k |a_k - b_k| / max(max_k |b_k|, 1e-300).
double relative_error(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace nmf

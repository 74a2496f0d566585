#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nmf/projection.hpp"
#include "nmf/training.hpp"

namespace nmf {

/// paper: forward sensitivity s' = grad_x g_x^T s, s(0) = 1, using s(T).
/// exact: backward co-state p' = -grad_m g^T p, p(T) = [1; 0], using p_x(0).
enum class GradMode { Paper, Exact };

GradMode parse_grad_mode(const std::string& name);
std::string grad_mode_name(GradMode mode);

struct InfMaxConfig {
  int budget = 1;
  double T = 10.0;
  double step_size = 0.01;
  int max_iters = 500;
  int stagnation_window = 10;
  double stagnation_tol = 1e-6;
  GradMode grad_mode = GradMode::Paper;
  Method method = Method::RK4;
  int steps = 40;  // over [0, T]

  IntegratorConfig integrator() const { return {method, steps, T}; }
  void validate(int n) const;
};

struct InfluenceGradient {
  Eigen::VectorXd grad;  // d(1^T x(T)) / du
  double sigma = 0.0;    // 1^T x(T) of the relaxed input, clamped per node
};

InfluenceGradient sensitivity_paper(const ThetaD& theta, const Eigen::VectorXd& u, const IntegratorConfig& integrator);
InfluenceGradient grad_influence_exact(const ThetaD& theta, const Eigen::VectorXd& u,
                                       const IntegratorConfig& integrator);

/// grad_u L(u) = (1 - 2u) - d(1^T x(T))/du for L(u) = sum u(1-u) - 1^T x(T).
InfluenceGradient grad_objective(const ThetaD& theta, const Eigen::VectorXd& u, const IntegratorConfig& integrator,
                                 GradMode mode);

/// Objective value sum u(1-u) - 1^T x(T; u) with unclamped x.
double objective_value(const ThetaD& theta, const Eigen::VectorXd& u, const IntegratorConfig& integrator);

/// Indices of the `budget` largest entries, ties to the lower index, sorted.
std::vector<NodeId> round_top(const Eigen::VectorXd& u, int budget);

struct InfMaxResult {
  Eigen::VectorXd u;
  std::vector<NodeId> selected;
  double sigma = 0.0;
  int iters = 0;
  std::vector<double> trace;  // relaxed influence per iteration
};

/// Projected gradient descent on the relaxed problem, then rounding. The
/// reported sigma comes from estimate_probs on the same parameters and
/// integrator.
InfMaxResult pgd_infmax(const ThetaD& theta, const InfMaxConfig& config, std::uint64_t seed);
std::string infmax_result_json(const InfMaxResult& r);

/// sigma(T) of a binary source set with the same model/integrator pgd_infmax uses.
double set_influence(const ThetaD& theta, const InfMaxConfig& config, const std::vector<NodeId>& set);

struct ExhaustiveResult {
  std::vector<NodeId> best;
  double sigma = 0.0;
};

/// argmax over all size-budget subsets in lexicographic order; the first
/// maximizer wins. Refuses more than 10^6 subsets.
ExhaustiveResult exhaustive_best_set(const std::function<double(const std::vector<NodeId>&)>& evaluator, int n,
                                     int budget);

}  // namespace nmf

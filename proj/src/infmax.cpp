#include "nmf/infmax.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "nmf/errors.hpp"
#include "nmf/eval.hpp"

namespace nmf {

GradMode parse_grad_mode(const std::string& name) {
  if (name == "paper") return GradMode::Paper;
  if (name == "exact") return GradMode::Exact;
  throw InvalidArgument("unknown grad_mode '" + name + "'");
}

std::string grad_mode_name(GradMode mode) { return mode == GradMode::Paper ? "paper" : "exact"; }

void InfMaxConfig::validate(int n) const {
  if (budget < 1 || budget > n - 1) throw InvalidArgument("budget must be in [1, n-1]");
  if (!(T > 0.0)) throw InvalidArgument("T must be > 0");
  if (!(step_size > 0.0)) throw InvalidArgument("step_size must be > 0");
  if (max_iters < 0 || stagnation_window < 1) throw InvalidArgument("invalid iteration limits");
  integrator().validate();
}

namespace {

void check_input(const ThetaD& theta, const Eigen::VectorXd& u) {
  if (u.size() != theta.size()) throw InvalidArgument("relaxed seed has the wrong size");
}

double clamped_sigma(const Vec<double>& x) { return x.cwiseMax(0.0).cwiseMin(1.0).sum(); }

}  // namespace

InfluenceGradient sensitivity_paper(const ThetaD& theta, const Eigen::VectorXd& u, const IntegratorConfig& integrator) {
  check_input(theta, u);
  const Eigen::Index n = theta.size();
  Vec<double> y(3 * n);
  y << u, Vec<double>::Zero(n), Vec<double>::Ones(n);
  auto field = [&](double, const Vec<double>& state) {
    const Vec<double> m = state.head(2 * n);
    Vec<double> dy(3 * n);
    dy.head(2 * n) = g_dynamics(m, theta);
    dy.tail(n) = jac_gx_x_vjp(m, theta, Vec<double>(state.tail(n)));
    return dy;
  };
  const Vec<double> yT = integrate_forward<double>(field, y, integrator).final_state();
  return {yT.tail(n), clamped_sigma(yT.head(n))};
}

InfluenceGradient grad_influence_exact(const ThetaD& theta, const Eigen::VectorXd& u,
                                       const IntegratorConfig& integrator) {
  check_input(theta, u);
  const Eigen::Index n = theta.size();
  // Running m backward is unstable (the forward flow contracts), so the
  // backward pass resets m to the forward state stored at every step.
  auto g_field = [&](double, const Vec<double>& m) { return g_dynamics(m, theta); };
  std::vector<Vec<double>> fine;
  Vec<double> mT = initial_state<double>(u);
  integrate_segment(integrator.method, g_field, 0.0, integrator.horizon, substeps_for(integrator.horizon, integrator), mT,
                    [&](double, Vec<double>& before) { fine.push_back(before); });
  if (!mT.allFinite()) throw DivergenceError(integrator.horizon);
  fine.push_back(mT);

  Vec<double> y = Vec<double>::Zero(4 * n);
  y.head(2 * n) = mT;
  y.segment(2 * n, n).setOnes();
  auto field = [&](double, const Vec<double>& state) {
    const Vec<double> m = state.head(2 * n);
    Vec<double> dy(4 * n);
    dy.head(2 * n) = g_dynamics(m, theta);
    dy.tail(2 * n) = -jac_g_m_vjp(m, theta, Vec<double>(state.tail(2 * n)));
    return dy;
  };
  auto no_jump = [](const Vec<double>& s, std::size_t) { return s; };
  std::size_t step_index = 0;
  auto reset = [&](double, Vec<double>& state) { state.head(2 * n) = fine[fine.size() - 1 - step_index++]; };
  const Vec<double> y0 =
      integrate_backward_with_jumps<double>(field, y, std::span<const double>(), no_jump, integrator, reset);
  return {y0.segment(2 * n, n), clamped_sigma(mT.head(n))};
}

InfluenceGradient grad_objective(const ThetaD& theta, const Eigen::VectorXd& u, const IntegratorConfig& integrator,
                                 GradMode mode) {
  InfluenceGradient s =
      mode == GradMode::Paper ? sensitivity_paper(theta, u, integrator) : grad_influence_exact(theta, u, integrator);
  s.grad = (Eigen::VectorXd::Ones(u.size()) - 2.0 * u) - s.grad;
  return s;
}

double objective_value(const ThetaD& theta, const Eigen::VectorXd& u, const IntegratorConfig& integrator) {
  check_input(theta, u);
  const Eigen::Index n = theta.size();
  auto g_field = [&](double, const Vec<double>& m) { return g_dynamics(m, theta); };
  const Vec<double> mT = integrate_forward<double>(g_field, initial_state<double>(u), integrator).final_state();
  return u.cwiseProduct(Eigen::VectorXd::Ones(n) - u).sum() - mT.head(n).sum();
}

std::vector<NodeId> round_top(const Eigen::VectorXd& u, int budget) {
  std::vector<NodeId> idx(u.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](NodeId a, NodeId b) { return u(a) > u(b); });
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double set_influence(const ThetaD& theta, const InfMaxConfig& config, const std::vector<NodeId>& set) {
  const IntegratorConfig ic = config.integrator();
  return estimate_probs(theta, ic, indicator(static_cast<int>(theta.size()), set), {ic.horizon}).values.sum();
}

InfMaxResult pgd_infmax(const ThetaD& theta, const InfMaxConfig& config, std::uint64_t seed) {
  const int n = static_cast<int>(theta.size());
  config.validate(n);
  const IntegratorConfig ic = config.integrator();

  Rng rng = substream(seed, "infmax-init");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u(i) = unit(rng);
  u = project_capped_simplex(u, static_cast<double>(config.budget));

  InfMaxResult r;
  int flat_run = 0;
  for (int it = 0; it < config.max_iters; ++it) {
    const InfluenceGradient g = grad_objective(theta, u, ic, config.grad_mode);
    if (!r.trace.empty() && std::abs(g.sigma - r.trace.back()) < config.stagnation_tol)
      ++flat_run;
    else
      flat_run = 0;
    r.trace.push_back(g.sigma);
    r.iters = it + 1;
    if (flat_run >= config.stagnation_window) break;
    u = project_capped_simplex(Eigen::VectorXd(u - config.step_size * g.grad), static_cast<double>(config.budget));
  }
  r.u = u;
  r.selected = round_top(u, config.budget);
  r.sigma = set_influence(theta, config, r.selected);
  return r;
}

std::string infmax_result_json(const InfMaxResult& r) {
  nlohmann::json j;
  j["u"] = std::vector<double>(r.u.data(), r.u.data() + r.u.size());
  j["selected"] = r.selected;
  j["sigma"] = r.sigma;
  j["iters"] = r.iters;
  j["trace"] = r.trace;
  return j.dump();
}

ExhaustiveResult exhaustive_best_set(const std::function<double(const std::vector<NodeId>&)>& evaluator, int n,
                                     int budget) {
  if (budget < 0 || budget > n) throw InvalidArgument("budget must be in [0, n]");
  double count = 1.0;
  for (int k = 0; k < budget; ++k) count = count * (n - k) / (k + 1);
  if (count > 1e6) throw CapacityError("exhaustive search over " + std::to_string(count) + " subsets refused");

  std::vector<NodeId> set(budget);
  std::iota(set.begin(), set.end(), 0);
  ExhaustiveResult best{set, evaluator(set)};
  while (true) {
    int k = budget - 1;
    while (k >= 0 && set[k] == n - budget + k) --k;
    if (k < 0) break;
    ++set[k];
    for (int j = k + 1; j < budget; ++j) set[j] = set[j - 1] + 1;
    const double s = evaluator(set);
    if (s > best.sigma) best = {set, s};
  }
  return best;
}

}  // namespace nmf

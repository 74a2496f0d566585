#include "nmf/verify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <json.hpp>

#include "nmf/cascade.hpp"
#include "nmf/errors.hpp"
#include "nmf/infmax.hpp"
#include "nmf/projection.hpp"
#include "nmf/training.hpp"

namespace nmf {

bool VerifyReport::all_passed() const { return first_failure() == nullptr; }

const CheckResult* VerifyReport::first_failure() const {
  for (const auto& c : checks)
    if (!c.passed) return &c;
  return nullptr;
}

std::string VerifyReport::to_json() const {
  nlohmann::json j;
  j["passed"] = all_passed();
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks)
    j["checks"].push_back(
        {{"suite", c.suite}, {"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold}});
  return j.dump();
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("relative_error: size mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, std::abs(a[k] - b[k]));
    scale = std::max(scale, std::abs(b[k]));
  }
  return diff / std::max(scale, 1e-300);
}

namespace {

std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void add(VerifyReport& r, const std::string& suite, const std::string& name, double value, double threshold) {
  r.checks.push_back({suite, name, value <= threshold, value, threshold});
}

DiffusionNetwork random_exponential_network(int n, double density, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0), rate(0.1, 1.0);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (i != j && unit(rng) < density) A(i, j) = rate(rng);
  return DiffusionNetwork(A);
}

ThetaD random_theta(int n, Rng& rng) {
  ThetaD t = initial_theta(n, rng);
  std::uniform_real_distribution<double> a(0.05, 0.4), k(0.05, 0.5);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (i != j) t.A(i, j) = a(rng);
  for (int i = 0; i < n; ++i) {
    t.kernel.B(i) = k(rng);
    t.kernel.C(i) = k(rng);
  }
  t.mlp.b2.array() += 0.3;  // keep most memory outputs off the clamp
  return t;
}

void gradient_suite(VerifyReport& r, int n, std::uint64_t seed) {
  const std::string S = "gradients";
  Rng rng = substream(seed, "verify-gradients");
  const ThetaD theta = random_theta(n, rng);
  std::uniform_real_distribution<double> unit(0.05, 0.95), sym(-1.0, 1.0);
  Eigen::VectorXd m(2 * n), p(2 * n), v(2 * n);
  for (int k = 0; k < 2 * n; ++k) {
    m(k) = unit(rng);
    p(k) = sym(rng);
    v(k) = sym(rng);
  }

  const double lhs = p.dot(jac_g_m_jvp(m, theta, v)), rhs = jac_g_m_vjp(m, theta, p).dot(v);
  add(r, S, "vjp_jvp_duality", std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)), 1e-12);

  const double h = 1e-6;
  const Eigen::VectorXd fd_m = (g_dynamics(Eigen::VectorXd(m + h * v), theta) -
                                g_dynamics(Eigen::VectorXd(m - h * v), theta)) / (2 * h);
  add(r, S, "jvp_vs_finite_differences", relative_error(as_std(jac_g_m_jvp(m, theta, v)), as_std(fd_m)), 1e-6);

  const Eigen::VectorXd flat = theta.flatten();
  const Eigen::VectorXd gt = grad_g_theta_vjp(m, theta, p);
  std::vector<double> fd_t, an_t;
  const ThetaLayout L = theta.layout();
  for (Eigen::Index k = 0; k < flat.size(); ++k) {
    if (k < L.W1() && k % (n + 1) == 0) continue;  // diagonal of A is pinned at 0
    Eigen::VectorXd plus = flat, minus = flat;
    plus(k) += h;
    minus(k) -= h;
    fd_t.push_back((p.dot(g_dynamics(m, ThetaD::unflatten(plus))) - p.dot(g_dynamics(m, ThetaD::unflatten(minus)))) /
                   (2 * h));
    an_t.push_back(gt(k));
  }
  add(r, S, "theta_vjp_vs_finite_differences", relative_error(an_t, fd_t), 1e-6);

  // Adjoint loss gradient on a simulated cascade.
  const GradientInstance inst = gradient_instance(n, seed, 0);
  const ThetaD& th = inst.theta;
  const Cascade& c = inst.cascade;
  TrainConfig cfg;
  cfg.integrator = {Method::RK4, 200, c.horizon};
  const LossGradient lg = grad_loss_adjoint(th, c, cfg);
  const Eigen::VectorXd flat_i = th.flatten();
  std::vector<double> fd_l, an_l;
  const double hl = 1e-5;
  for (Eigen::Index k = 0; k < flat_i.size(); ++k) {
    if (k < L.W1() && k % (n + 1) == 0) continue;
    Eigen::VectorXd plus = flat_i, minus = flat_i;
    plus(k) += hl;
    minus(k) -= hl;
    fd_l.push_back((loss_forward(ThetaD::unflatten(plus), c, cfg) - loss_forward(ThetaD::unflatten(minus), c, cfg)) /
                   (2 * hl));
    an_l.push_back(lg.grad(k));
  }
  add(r, S, "adjoint_loss_gradient_vs_finite_differences", relative_error(an_l, fd_l), 1e-4);

  // Exact influence gradient.
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u(i) = unit(rng);
  const IntegratorConfig ic{Method::RK4, 200, 5.0};
  const Eigen::VectorXd gu = grad_influence_exact(theta, u, ic).grad;
  std::vector<double> fd_u;
  auto sigma = [&](const Eigen::VectorXd& uu) {
    auto field = [&](double, const Vec<double>& mm) { return g_dynamics(mm, theta); };
    return integrate_forward<double>(field, initial_state<double>(uu), ic).final_state().head(n).sum();
  };
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd plus = u, minus = u;
    plus(i) += hl;
    minus(i) -= hl;
    fd_u.push_back((sigma(plus) - sigma(minus)) / (2 * hl));
  }
  add(r, S, "influence_gradient_vs_finite_differences", relative_error(as_std(gu), fd_u), 1e-4);

  const Regularizer reg = regularizer_logsum(theta.A, 0.01);
  std::vector<double> fd_r, an_r;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (i == j) continue;
      Eigen::MatrixXd plus = theta.A, minus = theta.A;
      plus(i, j) += 1e-6;
      minus(i, j) -= 1e-6;
      fd_r.push_back((regularizer_logsum(plus, 0.01).value - regularizer_logsum(minus, 0.01).value) / 2e-6);
      an_r.push_back(reg.grad(i, j));
    }
  add(r, S, "logsum_gradient_vs_finite_differences", relative_error(an_r, fd_r), 1e-7);
}

void oracle_suite(VerifyReport& r, int n, std::uint64_t seed) {
  const std::string S = "oracles";
  Rng rng = substream(seed, "verify-oracles");
  const DiffusionNetwork net = random_exponential_network(n, 0.3, rng);
  const std::vector<NodeId> source{0};
  const std::vector<double> grid = uniform_grid(20.0, 20);
  const CtmcResult ctmc = exact_probs_ctmc_detail(net, source, grid);

  double mass_err = 0.0;
  for (double m : ctmc.total_mass) mass_err = std::max(mass_err, std::abs(m - 1.0));
  add(r, S, "ctmc_total_mass", mass_err, 1e-9);

  double decrease = 0.0;
  for (Eigen::Index l = 1; l < ctmc.curve.values.rows(); ++l)
    decrease = std::max(decrease, (ctmc.curve.values.row(l - 1) - ctmc.curve.values.row(l)).maxCoeff());
  add(r, S, "ctmc_monotone", decrease, 1e-12);

  if (n <= 10) {
    const ZOdeResult z = full_z_ode_oracle(net, source, grid);
    add(r, S, "z_ode_vs_ctmc_sup_norm", (z.curve.values - ctmc.curve.values).cwiseAbs().maxCoeff(), 1e-6);
  }

  const int samples = 20000;
  const McEstimate mc = estimate_probs_mc(net, DelayModel::exponential(), source, grid, samples, seed);
  double worst = 0.0;
  for (Eigen::Index l = 0; l < mc.curve.values.rows(); ++l)
    for (int i = 0; i < n; ++i) {
      const double p = ctmc.curve.values(l, i), q = mc.curve.values(l, i);
      const double se = std::sqrt(std::max(p * (1 - p), q * (1 - q)) / samples);
      const double diff = std::abs(p - q);
      worst = std::max(worst, se > 0 ? diff / se : (diff > 1e-9 ? 1e9 : 0.0));
    }
  add(r, S, "monte_carlo_within_4_standard_errors", worst, 4.0);
}

void projection_suite(VerifyReport& r, int n, std::uint64_t seed) {
  const std::string S = "projection";
  Rng rng = substream(seed, "verify-projection");
  std::normal_distribution<double> normal(0.5, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double feas = 0.0, kkt = 0.0;
  int losses = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal(rng);
    const int budget = 1 + static_cast<int>(unit(rng) * n) % n;
    const Eigen::VectorXd u = project_capped_simplex(v, static_cast<double>(budget));
    feas = std::max({feas, std::abs(u.sum() - budget), (-u.array()).maxCoeff(), (u.array() - 1.0).maxCoeff()});
    // KKT: a single multiplier explains every coordinate.
    double lambda = 0.0;
    int free = 0;
    for (int i = 0; i < n; ++i)
      if (u(i) > 1e-12 && u(i) < 1 - 1e-12) {
        lambda += v(i) - u(i);
        ++free;
      }
    if (free > 0) {
      lambda /= free;
      for (int i = 0; i < n; ++i) {
        const double target = std::clamp(v(i) - lambda, 0.0, 1.0);
        kkt = std::max(kkt, std::abs(target - u(i)));
      }
    }
    for (int k = 0; k < 50; ++k) {
      // Random feasible point: mix of random vertices.
      Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
      double total = 0.0;
      for (int vtx = 0; vtx < 3; ++vtx) {
        std::vector<NodeId> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        const double weight = unit(rng) + 1e-3;
        for (int i = 0; i < budget; ++i) w(idx[i]) += weight;
        total += weight;
      }
      w /= total;
      if ((w - v).norm() < (u - v).norm() - 1e-12) ++losses;
    }
  }
  add(r, S, "feasibility", feas, 1e-9);
  add(r, S, "kkt_residual", kkt, 1e-9);
  add(r, S, "random_feasible_points_closer", losses, 0.0);
}

}  // namespace

bool smooth_along_cascade(const ThetaD& theta, const Cascade& cascade, const IntegratorConfig& integrator,
                         double margin) {
  const int n = theta.size();
  bool fixed = true;
  Eigen::VectorXd first;
  auto field = [&](double, const Vec<double>& m) {
    const Vec<double> x = m.head(n), h = m.tail(n);
    const auto tape = eps_net_tape<double>(x, h, theta.mlp);
    const Eigen::VectorXd mask = tape.clamp_mask();
    if (first.size() == 0) first = mask;
    if (mask != first) fixed = false;
    const auto z = tape.z2.array();
    if ((z.abs() < margin).any() || ((z - 1.0).abs() < margin).any()) fixed = false;
    return g_dynamics(m, theta);
  };
  const EventSchedule sched = event_schedule(cascade);
  const std::vector<double> times = sched.times();
  const auto traj = integrate_forward<double>(field, initial_state<double>(indicator(n, cascade.source)), integrator,
                                              std::span<const double>(times));
  for (const Event& e : sched.events)
    if (g_dynamics(traj.at(e.time), theta)(e.node) < margin) fixed = false;
  return fixed;
}

GradientInstance gradient_instance(int n, std::uint64_t seed, int index) {
  GradientInstance inst;
  Rng nrng = substream(seed, "gradient-network", static_cast<std::uint64_t>(index));
  if (std::has_single_bit(static_cast<unsigned>(n))) {
    KroneckerSpec spec;
    spec.seed = kronecker_seed(KroneckerKind::Random);
    spec.iterations = std::countr_zero(static_cast<unsigned>(n));
    spec.target_edges = 2.0 * n;
    inst.truth = generate_kronecker(spec, nrng);
  } else {
    inst.truth = random_exponential_network(n, 2.0 / (n - 1), nrng);
  }
  const double horizon = 5.0;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) throw InvalidArgument("no cascade with 1..5 events");
    Rng crng = substream(seed, "gradient-cascade", static_cast<std::uint64_t>(index) * 1000 + attempt);
    std::uniform_int_distribution<NodeId> node(0, n - 1);
    inst.cascade = simulate_cascade(inst.truth, {node(crng)}, horizon, DelayModel::exponential(), crng);
    const auto events = event_schedule(inst.cascade).events.size();
    if (events >= 1 && events <= 5) break;
  }
  const IntegratorConfig ic{Method::RK4, 200, horizon};
  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) throw InvalidArgument("no smooth parameter draw");
    Rng trng = substream(seed, "gradient-theta", static_cast<std::uint64_t>(index) * 1000 + attempt);
    inst.theta = random_theta(n, trng);
    if (smooth_along_cascade(inst.theta, inst.cascade, ic, 1e-3)) break;
  }
  return inst;
}

VerifyReport run_verification(const std::string& suite, int n, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("verification needs n >= 2");
  VerifyReport r;
  const bool all = suite == "all";
  if (!all && suite != "gradients" && suite != "oracles" && suite != "projection")
    throw InvalidArgument("unknown suite '" + suite + "'");
  if (all || suite == "gradients") gradient_suite(r, n, seed);
  if (all || suite == "oracles") oracle_suite(r, n, seed);
  if (all || suite == "projection") projection_suite(r, n, seed);
  return r;
}

}  // namespace nmf

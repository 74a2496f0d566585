#include "nmf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nmf/errors.hpp"
#include "nmf/parallel.hpp"

namespace nmf {

std::vector<double> EventSchedule::times() const {
  std::vector<double> t;
  t.reserve(events.size());
  for (const Event& e : events) t.push_back(e.time);
  return t;
}

EventSchedule event_schedule(const Cascade& cascade) {
  EventSchedule s;
  s.source = cascade.source;
  s.horizon = cascade.horizon;
  std::vector<char> is_source(cascade.size(), 0);
  for (NodeId i : cascade.source) {
    if (i < 0 || i >= cascade.size()) throw DataError("source id out of range");
    is_source[i] = 1;
  }
  for (int i = 0; i < cascade.size(); ++i) {
    const double t = cascade.times[i];
    if (is_source[i] || t == kNever) continue;
    if (!(t > 0.0 && t <= cascade.horizon)) throw DataError("infection time outside (0, T]");
    s.events.push_back({t, i});
  }
  std::sort(s.events.begin(), s.events.end(),
            [](const Event& a, const Event& b) { return a.time < b.time || (a.time == b.time && a.node < b.node); });
  for (std::size_t k = 1; k < s.events.size(); ++k)
    if (s.events[k].time == s.events[k - 1].time)
      throw DataError("nodes " + std::to_string(s.events[k - 1].node) + " and " + std::to_string(s.events[k].node) +
                      " share infection time " + std::to_string(s.events[k].time));
  return s;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (!(adam.lr > 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
        adam.eps > 0.0))
    throw InvalidArgument("invalid Adam parameters");
  if (!(reg_coeff_A >= 0.0 && weight_decay >= 0.0)) throw InvalidArgument("regularization must be >= 0");
  if (!(logsum_delta > 0.0)) throw InvalidArgument("logsum_delta must be > 0");
  if (!(log_floor > 0.0)) throw InvalidArgument("log_floor must be > 0");
  integrator.validate();
}

namespace {

IntegratorConfig cascade_integrator(const TrainConfig& config, const Cascade& cascade) {
  IntegratorConfig ic = config.integrator;
  if (cascade.horizon > ic.horizon * (1.0 + 1e-12))
    throw InvalidArgument("cascade horizon exceeds the integrator horizon");
  return ic;
}

double event_log_intensity(const Vec<double>& m, const ThetaD& theta, NodeId node, double floor) {
  const double gi = g_dynamics(m, theta)(node);
  return std::log(std::max(gi, floor));
}

}  // namespace

double loss_forward(const ThetaD& theta, const Cascade& cascade, const TrainConfig& config) {
  const IntegratorConfig ic = cascade_integrator(config, cascade);
  const EventSchedule sched = event_schedule(cascade);
  const std::vector<double> times = sched.times();
  const Eigen::Index n = theta.size();
  auto field = [&](double, const Vec<double>& m) { return g_dynamics(m, theta); };
  const auto traj = integrate_forward<double>(field, initial_state<double>(indicator(n, cascade.source)), ic,
                                              std::span<const double>(times));
  double loss = traj.final_state().head(n).sum();
  for (const Event& e : sched.events) loss -= event_log_intensity(traj.at(e.time), theta, e.node, config.log_floor);
  return loss;
}

LossGradient grad_loss_adjoint(const ThetaD& theta, const Cascade& cascade, const TrainConfig& config) {
  const IntegratorConfig ic = cascade_integrator(config, cascade);
  const EventSchedule sched = event_schedule(cascade);
  const std::vector<double> times = sched.times();
  const ThetaLayout L = theta.layout();
  const Eigen::Index n = L.n, P = L.size();

  // Forward pass.
  auto g_field = [&](double, const Vec<double>& m) { return g_dynamics(m, theta); };
  const Vec<double> m0 = initial_state<double>(indicator(static_cast<int>(n), cascade.source));
  std::vector<Vec<double>> fine;  // forward states at every step, checkpointed mode only
  Vec<double> mT;
  LossGradient out;
  if (config.checkpointed) {
    const auto bounds = segment_boundaries<double>(ic, times);
    Vec<double> m = m0;
    for (std::size_t s = 1; s < bounds.size(); ++s)
      integrate_segment(ic.method, g_field, bounds[s - 1], bounds[s], substeps_for(bounds[s] - bounds[s - 1], ic), m,
                        [&](double, Vec<double>& before) { fine.push_back(before); });
    fine.push_back(m);
    mT = m;
  } else {
    mT = integrate_forward<double>(g_field, m0, ic, std::span<const double>(times)).final_state();
  }

  // Backward pass over y = [m; p; q].
  Vec<double> y = Vec<double>::Zero(4 * n + P);
  y.head(2 * n) = mT;
  y.segment(2 * n, n).setOnes();
  auto field = [&](double, const Vec<double>& state) {
    Vec<double> dy(state.size());
    adjoint_rhs<double>(state.head(2 * n), state.segment(2 * n, 2 * n), theta, dy.head(2 * n),
                        dy.segment(2 * n, 2 * n), dy.tail(P));
    return dy;
  };
  double running = 0.0;
  auto jump = [&](const Vec<double>& state, std::size_t k) {
    Vec<double> next = state;
    const auto lg = grad_log_component<double>(state.head(2 * n), theta, sched.events[k].node, config.log_floor);
    running -= lg.log_value;
    if (lg.floored) ++out.floored_events;
    next.segment(2 * n, 2 * n) -= lg.d_m;
    next.tail(P) -= lg.d_theta;
    return next;
  };
  std::size_t step_index = 0;
  auto hook = [&](double, Vec<double>& state) {
    if (!config.checkpointed) return;
    state.head(2 * n) = fine[fine.size() - 1 - step_index];
    ++step_index;
  };
  y = integrate_backward_with_jumps<double>(field, y, std::span<const double>(times), jump, ic, hook);

  out.grad = y.tail(P);
  out.loss = mT.head(n).sum() + running;
  if (!out.grad.allFinite()) throw DivergenceError(0.0);
  return out;
}

Regularizer regularizer_logsum(const Eigen::MatrixXd& A, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("logsum delta must be > 0");
  Regularizer r;
  r.grad = (delta + A.array()).inverse().matrix();
  r.grad.diagonal().setZero();
  Eigen::MatrixXd vals = (A.array() / delta).log1p().matrix();
  vals.diagonal().setZero();
  r.value = vals.sum();
  return r;
}

void adam_step(Eigen::VectorXd& theta_flat, const Eigen::VectorXd& grad_flat, AdamState& state,
               const AdamConfig& adam, double weight_decay, const UpdateMask& mask) {
  const ThetaLayout L = ThetaLayout::from_size(theta_flat.size());
  const Eigen::Index n = L.n;
  if (grad_flat.size() != theta_flat.size()) throw InvalidArgument("gradient size mismatch");
  if (state.m.size() != theta_flat.size()) {
    state.m = Eigen::VectorXd::Zero(theta_flat.size());
    state.v = Eigen::VectorXd::Zero(theta_flat.size());
    state.step = 0;
  }

  // 1 where the entry is trainable, 0 where frozen.
  Eigen::VectorXd active = Eigen::VectorXd::Ones(theta_flat.size());
  if (!mask.train_eta) active.segment(L.W1(), L.B() - L.W1()).setZero();
  if (!mask.train_kernel) active.segment(L.B(), 2 * n).setZero();
  Eigen::Map<Eigen::MatrixXd> activeA(active.data() + L.A(), n, n);
  activeA.diagonal().setZero();
  if (mask.A_support) activeA = activeA.cwiseProduct((mask.A_support->array() != 0.0).cast<double>().matrix());

  const Eigen::VectorXd g = grad_flat.cwiseProduct(active);
  ++state.step;
  state.m = adam.beta1 * state.m + (1.0 - adam.beta1) * g;
  state.v = adam.beta2 * state.v + (1.0 - adam.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  Eigen::VectorXd update = (state.m / c1).array() / ((state.v / c2).array().sqrt() + adam.eps);

  Eigen::VectorXd decay = Eigen::VectorXd::Zero(theta_flat.size());
  decay.segment(L.W1(), L.size() - L.W1()) = weight_decay * theta_flat.segment(L.W1(), L.size() - L.W1());
  theta_flat -= adam.lr * (update + decay).cwiseProduct(active);

  Eigen::Map<Eigen::MatrixXd> A(theta_flat.data() + L.A(), n, n);
  A = A.cwiseMax(0.0);
  A.diagonal().setZero();
  if (mask.A_support) A = A.cwiseProduct((mask.A_support->array() != 0.0).cast<double>().matrix());
  theta_flat.segment(L.C(), n) = theta_flat.segment(L.C(), n).cwiseMax(0.0);
}

ThetaD initial_theta(int n, Rng& rng) {
  ThetaD t = ThetaD::zeros(n);
  std::uniform_real_distribution<double> rate(0.0, 0.1);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (i != j) t.A(i, j) = rate(rng);
  auto fill = [&rng](auto& block, double fan_in) {
    const double r = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> w(-r, r);
    for (Eigen::Index k = 0; k < block.size(); ++k) block.data()[k] = w(rng);
  };
  fill(t.mlp.W1, 2.0 * n);
  fill(t.mlp.b1, 2.0 * n);
  fill(t.mlp.W2, n);
  fill(t.mlp.b2, n);
  t.kernel.B.setConstant(0.1);
  t.kernel.C.setConstant(0.1);
  return t;
}

TrainedModel train(const CascadeSet& dataset, const TrainConfig& config, std::uint64_t seed,
                   const TrainOptions& options) {
  config.validate();
  if (dataset.cascades.empty()) throw InvalidArgument("training needs at least one cascade");
  const int n = dataset.n;

  TrainedModel model;
  model.seed = seed;
  model.integrator = config.integrator;
  if (options.init) {
    model.theta = *options.init;
  } else {
    Rng rng = substream(seed, "init");
    model.theta = initial_theta(n, rng);
  }
  if (model.theta.size() != n) throw InvalidArgument("initial parameters do not match the dataset node count");
  if (options.A_support) {
    if (options.A_support->rows() != n || options.A_support->cols() != n) throw InvalidArgument("support shape mismatch");
    model.theta.A = model.theta.A.cwiseProduct((options.A_support->array() != 0.0).cast<double>().matrix());
  }
  model.theta.validate();

  UpdateMask mask{!config.freeze_eta, !config.freeze_kernel, options.A_support};
  const ThetaLayout L = model.theta.layout();
  Eigen::VectorXd flat = model.theta.flatten();
  AdamState adam;

  const std::size_t K = dataset.cascades.size();
  std::vector<std::size_t> order(K);
  std::vector<LossGradient> per_cascade;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = substream(seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < K; begin += config.batch_size) {
      const std::size_t end = std::min(K, begin + config.batch_size);
      const ThetaD theta = ThetaD::unflatten(flat);
      per_cascade.assign(end - begin, {});
      parallel_for(end - begin, config.threads, [&](std::size_t k) {
        per_cascade[k] = grad_loss_adjoint(theta, dataset.cascades[order[begin + k]], config);
      });
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(L.size());
      for (const auto& lg : per_cascade) {
        grad += lg.grad;
        epoch_loss += lg.loss;
      }
      if (config.reg_coeff_A > 0.0) {
        const Regularizer reg = regularizer_logsum(theta.A, config.logsum_delta);
        grad.segment(L.A(), L.n * L.n) += config.reg_coeff_A * reg.grad.reshaped();
      }
      adam_step(flat, grad, adam, config.adam, config.weight_decay, mask);
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(K));
    if (options.on_epoch) options.on_epoch(epoch, model.loss_history.back(), ThetaD::unflatten(flat));
  }
  model.theta = ThetaD::unflatten(flat);
  return model;
}

}  // namespace nmf

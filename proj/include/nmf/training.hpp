#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "nmf/cascade.hpp"
#include "nmf/dynamics.hpp"
#include "nmf/ode.hpp"

namespace nmf {

using ThetaD = Theta<double>;

struct Event {
  double time = 0.0;
  NodeId node = 0;
  friend bool operator==(const Event&, const Event&) = default;
};

/// Non-source infections of a cascade sorted by time.
struct EventSchedule {
  std::vector<Event> events;
  std::vector<NodeId> source;
  double horizon = 0.0;

  std::vector<double> times() const;
};

EventSchedule event_schedule(const Cascade& cascade);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int batch_size = 300;
  int epochs = 50;
  AdamConfig adam;
  double reg_coeff_A = 0.01;
  /// Decoupled weight decay on the MLP and kernel parameters.
  double weight_decay = 1.0;
  IntegratorConfig integrator;
  double logsum_delta = 0.01;
  double log_floor = 1e-8;
  bool freeze_eta = false;
  bool freeze_kernel = false;
  /// Backward pass resets m to stored forward states at every step.
  bool checkpointed = false;
  unsigned threads = 1;

  void validate() const;
};

/// Frozen parameters plus the integrator they were trained with.
struct TrainedModel {
  ThetaD theta;
  IntegratorConfig integrator;
  std::vector<double> loss_history;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(theta.size()); }
};

/// Negative log-likelihood sum_events -log max(g_i(m(t_i)), floor) + 1^T x(T).
double loss_forward(const ThetaD& theta, const Cascade& cascade, const TrainConfig& config);

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd grad;     // flattened, ThetaLayout order
  int floored_events = 0;   // events whose intensity hit the log floor
};

/// Adjoint gradient: forward pass for m(T), then [m; p; q] backward from
/// [m(T); [1; 0]; 0] with p -= grad_m log g_i and q -= grad_theta log g_i at
/// every event time. Returns q(0).
LossGradient grad_loss_adjoint(const ThetaD& theta, const Cascade& cascade, const TrainConfig& config);

struct Regularizer {
  double value = 0.0;
  Eigen::MatrixXd grad;
};

/// sum_{i != j} log(1 + A_ij / delta) and its gradient 1 / (delta + A_ij).
Regularizer regularizer_logsum(const Eigen::MatrixXd& A, double delta);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

/// Which parameters the optimizer may move, and where A may be nonzero.
struct UpdateMask {
  bool train_eta = true;
  bool train_kernel = true;
  std::optional<Eigen::MatrixXd> A_support;  // 1 where an edge is allowed
};

/// Adam with bias correction; decoupled weight decay on eta and kernel only;
/// afterwards A is projected to >= 0 with zero diagonal (and off-support
/// zeros) and C to >= 0.
void adam_step(Eigen::VectorXd& theta_flat, const Eigen::VectorXd& grad_flat, AdamState& state,
               const AdamConfig& adam, double weight_decay, const UpdateMask& mask = {});

/// A ~ U(0, 0.1) off-diagonal, MLP weights and biases ~ U(+-1/sqrt(fan_in)), B = C = 0.1.
ThetaD initial_theta(int n, Rng& rng);

struct TrainOptions {
  std::optional<ThetaD> init;
  std::optional<Eigen::MatrixXd> A_support;
  /// Called after each epoch with (epoch, mean loss, theta).
  std::function<void(int, double, const ThetaD&)> on_epoch;
};

/// Mini-batch training; per-cascade gradients are summed within a batch.
TrainedModel train(const CascadeSet& dataset, const TrainConfig& config, std::uint64_t seed,
                   const TrainOptions& options = {});

}  // namespace nmf

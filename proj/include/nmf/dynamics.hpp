#pragma once

// Neural mean-field vector field on the augmented state m = [x; h]:
//
//   x' = A x - diag(x) A x + eps(x, h)      eps = clamp01(W2 elu(W1 [x; h] + b1) + b2)
//   h' = B x - C h                          B, C diagonal
//
// with exact Jacobian-vector products in m and in the parameters.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>

#include "nmf/errors.hpp"
#include "nmf/ode.hpp"

namespace nmf {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
struct MlpParams {
  Mat<Scalar> W1;  // n x 2n
  Vec<Scalar> b1;  // n
  Mat<Scalar> W2;  // n x n
  Vec<Scalar> b2;  // n
};

/// Diagonals of the exponential memory kernel K(t) = B exp(-C t).
template <class Scalar>
struct KernelParams {
  Vec<Scalar> B;
  Vec<Scalar> C;
};

/// Offsets of each block inside the flattened parameter vector.
/// Order: A, W1, b1, W2, b2, B, C; matrices column-major.
struct ThetaLayout {
  Eigen::Index n = 0;

  explicit ThetaLayout(Eigen::Index nodes) : n(nodes) {}
  Eigen::Index A() const { return 0; }
  Eigen::Index W1() const { return n * n; }
  Eigen::Index b1() const { return W1() + 2 * n * n; }
  Eigen::Index W2() const { return b1() + n; }
  Eigen::Index b2() const { return W2() + n * n; }
  Eigen::Index B() const { return b2() + n; }
  Eigen::Index C() const { return B() + n; }
  Eigen::Index size() const { return C() + n; }

  /// Node count from a flattened size 4n^2 + 4n.
  static ThetaLayout from_size(Eigen::Index size) {
    Eigen::Index n = 0;
    while (4 * n * n + 4 * n < size) ++n;
    if (4 * n * n + 4 * n != size) throw InvalidArgument("flattened parameter size is not 4n^2 + 4n");
    return ThetaLayout(n);
  }
};

/// Trainable parameters: transmission matrix, memory MLP, memory kernel.
template <class Scalar>
struct Theta {
  Mat<Scalar> A;
  MlpParams<Scalar> mlp;
  KernelParams<Scalar> kernel;

  Eigen::Index size() const { return A.rows(); }
  ThetaLayout layout() const { return ThetaLayout(size()); }

  static Theta zeros(Eigen::Index n) {
    Theta t;
    t.A = Mat<Scalar>::Zero(n, n);
    t.mlp.W1 = Mat<Scalar>::Zero(n, 2 * n);
    t.mlp.b1 = Vec<Scalar>::Zero(n);
    t.mlp.W2 = Mat<Scalar>::Zero(n, n);
    t.mlp.b2 = Vec<Scalar>::Zero(n);
    t.kernel.B = Vec<Scalar>::Zero(n);
    t.kernel.C = Vec<Scalar>::Zero(n);
    return t;
  }

  Vec<Scalar> flatten() const {
    const ThetaLayout L = layout();
    const Eigen::Index n = L.n;
    Vec<Scalar> out(L.size());
    out.segment(L.A(), n * n) = A.reshaped();
    out.segment(L.W1(), 2 * n * n) = mlp.W1.reshaped();
    out.segment(L.b1(), n) = mlp.b1;
    out.segment(L.W2(), n * n) = mlp.W2.reshaped();
    out.segment(L.b2(), n) = mlp.b2;
    out.segment(L.B(), n) = kernel.B;
    out.segment(L.C(), n) = kernel.C;
    return out;
  }

  static Theta unflatten(const Vec<Scalar>& flat) {
    const ThetaLayout L = ThetaLayout::from_size(flat.size());
    const Eigen::Index n = L.n;
    Theta t;
    t.A = flat.segment(L.A(), n * n).reshaped(n, n);
    t.mlp.W1 = flat.segment(L.W1(), 2 * n * n).reshaped(n, 2 * n);
    t.mlp.b1 = flat.segment(L.b1(), n);
    t.mlp.W2 = flat.segment(L.W2(), n * n).reshaped(n, n);
    t.mlp.b2 = flat.segment(L.b2(), n);
    t.kernel.B = flat.segment(L.B(), n);
    t.kernel.C = flat.segment(L.C(), n);
    return t;
  }

  template <class Other>
  Theta<Other> cast() const {
    return Theta<Other>::unflatten(flatten().template cast<Other>());
  }

  /// A >= 0 with zero diagonal, C >= 0, all finite, consistent shapes.
  void validate() const {
    const Eigen::Index n = size();
    if (A.cols() != n || mlp.W1.rows() != n || mlp.W1.cols() != 2 * n || mlp.b1.size() != n ||
        mlp.W2.rows() != n || mlp.W2.cols() != n || mlp.b2.size() != n || kernel.B.size() != n ||
        kernel.C.size() != n)
      throw InvalidArgument("inconsistent parameter shapes");
    if (!flatten().allFinite()) throw InvalidArgument("non-finite parameters");
    if ((A.array() < Scalar(0)).any()) throw InvalidArgument("transmission matrix must be nonnegative");
    if ((A.diagonal().array() != Scalar(0)).any()) throw InvalidArgument("transmission matrix must have zero diagonal");
    if ((kernel.C.array() < Scalar(0)).any()) throw InvalidArgument("kernel decay rates must be nonnegative");
  }
};

/// f(x; A) = A x - diag(x) A x.
template <class Scalar>
Vec<Scalar> f_meanfield(const Vec<Scalar>& x, const Mat<Scalar>& A) {
  const Vec<Scalar> Ax = A * x;
  return Ax - x.cwiseProduct(Ax);
}

template <class Scalar>
Scalar elu(Scalar z) {
  return z >= Scalar(0) ? z : std::expm1(z);
}

/// ELU derivative, taken as 1 at z = 0.
template <class Scalar>
Scalar elu_grad(Scalar z) {
  return z >= Scalar(0) ? Scalar(1) : std::exp(z);
}

/// Intermediate values of one MLP evaluation, reused by the derivative routines.
template <class Scalar>
struct MlpTape {
  Vec<Scalar> input;   // [x; h]
  Vec<Scalar> z1;      // W1 input + b1
  Vec<Scalar> a1;      // elu(z1)
  Vec<Scalar> z2;      // W2 a1 + b2
  Vec<Scalar> output;  // clamp01(z2)

  /// d clamp01 / dz: 1 strictly inside (0, 1), 0 elsewhere.
  Vec<Scalar> clamp_mask() const {
    return ((z2.array() > Scalar(0)) && (z2.array() < Scalar(1))).template cast<Scalar>().matrix();
  }
  Vec<Scalar> elu_slope() const { return z1.unaryExpr([](Scalar z) { return elu_grad(z); }); }
};

template <class Scalar>
MlpTape<Scalar> eps_net_tape(const Vec<Scalar>& x, const Vec<Scalar>& h, const MlpParams<Scalar>& mlp) {
  MlpTape<Scalar> t;
  t.input.resize(x.size() + h.size());
  t.input << x, h;
  t.z1 = mlp.W1 * t.input + mlp.b1;
  t.a1 = t.z1.unaryExpr([](Scalar z) { return elu(z); });
  t.z2 = mlp.W2 * t.a1 + mlp.b2;
  t.output = t.z2.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  return t;
}

/// Memory correction eps(x, h; eta), always in [0, 1] componentwise.
template <class Scalar>
Vec<Scalar> eps_net(const Vec<Scalar>& x, const Vec<Scalar>& h, const MlpParams<Scalar>& mlp) {
  return eps_net_tape(x, h, mlp).output;
}

/// g(m; theta) for m = [x; h].
template <class Scalar>
Vec<Scalar> g_dynamics(const Vec<Scalar>& m, const Theta<Scalar>& theta) {
  const Eigen::Index n = theta.size();
  const Vec<Scalar> x = m.head(n), h = m.tail(n);
  Vec<Scalar> out(2 * n);
  out.head(n) = f_meanfield(x, theta.A) + eps_net(x, h, theta.mlp);
  out.tail(n) = theta.kernel.B.cwiseProduct(x) - theta.kernel.C.cwiseProduct(h);
  return out;
}

/// grad_m g(m; theta)^T p.
template <class Scalar>
Vec<Scalar> jac_g_m_vjp(const Vec<Scalar>& m, const Theta<Scalar>& theta, const Vec<Scalar>& p) {
  const Eigen::Index n = theta.size();
  const Vec<Scalar> x = m.head(n), h = m.tail(n);
  const Vec<Scalar> px = p.head(n), ph = p.tail(n);
  const auto& A = theta.A;
  const MlpTape<Scalar> tape = eps_net_tape(x, h, theta.mlp);
  const Vec<Scalar> d2 = px.cwiseProduct(tape.clamp_mask());
  const Vec<Scalar> d1 = (theta.mlp.W2.transpose() * d2).cwiseProduct(tape.elu_slope());

  Vec<Scalar> out = theta.mlp.W1.transpose() * d1;
  const Vec<Scalar> Ax = A * x;
  out.head(n) += A.transpose() * px - Ax.cwiseProduct(px) - A.transpose() * x.cwiseProduct(px) +
                 theta.kernel.B.cwiseProduct(ph);
  out.tail(n) -= theta.kernel.C.cwiseProduct(ph);
  return out;
}

/// grad_m g(m; theta) v.
template <class Scalar>
Vec<Scalar> jac_g_m_jvp(const Vec<Scalar>& m, const Theta<Scalar>& theta, const Vec<Scalar>& v) {
  const Eigen::Index n = theta.size();
  const Vec<Scalar> x = m.head(n), h = m.tail(n);
  const Vec<Scalar> vx = v.head(n), vh = v.tail(n);
  const auto& A = theta.A;
  const MlpTape<Scalar> tape = eps_net_tape(x, h, theta.mlp);
  const Vec<Scalar> dz1 = (theta.mlp.W1 * v).cwiseProduct(tape.elu_slope());
  const Vec<Scalar> dz2 = (theta.mlp.W2 * dz1).cwiseProduct(tape.clamp_mask());

  Vec<Scalar> out(2 * n);
  const Vec<Scalar> Avx = A * vx;
  out.head(n) = Avx - vx.cwiseProduct(A * x) - x.cwiseProduct(Avx) + dz2;
  out.tail(n) = theta.kernel.B.cwiseProduct(vx) - theta.kernel.C.cwiseProduct(vh);
  return out;
}

/// grad_x g_x(m; theta)^T s: the x-block of the VJP with p = [s; 0].
template <class Scalar>
Vec<Scalar> jac_gx_x_vjp(const Vec<Scalar>& m, const Theta<Scalar>& theta, const Vec<Scalar>& s) {
  const Eigen::Index n = theta.size();
  Vec<Scalar> p = Vec<Scalar>::Zero(2 * n);
  p.head(n) = s;
  return jac_g_m_vjp(m, theta, p).head(n);
}

/// Adds weight * grad_theta g(m; theta)^T p into a structured accumulator.
/// The A-block is zero on the diagonal.
template <class Scalar>
void accumulate_grad_theta(const Vec<Scalar>& m, const Theta<Scalar>& theta, const Vec<Scalar>& p, Scalar weight,
                           Theta<Scalar>& acc) {
  const Eigen::Index n = theta.size();
  const Vec<Scalar> x = m.head(n), h = m.tail(n);
  const Vec<Scalar> px = weight * p.head(n), ph = weight * p.tail(n);
  const MlpTape<Scalar> tape = eps_net_tape(x, h, theta.mlp);
  const Vec<Scalar> d2 = px.cwiseProduct(tape.clamp_mask());
  const Vec<Scalar> d1 = (theta.mlp.W2.transpose() * d2).cwiseProduct(tape.elu_slope());

  acc.A.noalias() += (px - x.cwiseProduct(px)) * x.transpose();
  acc.A.diagonal().setZero();
  acc.mlp.W2.noalias() += d2 * tape.a1.transpose();
  acc.mlp.b2 += d2;
  acc.mlp.W1.noalias() += d1 * tape.input.transpose();
  acc.mlp.b1 += d1;
  acc.kernel.B += ph.cwiseProduct(x);
  acc.kernel.C -= ph.cwiseProduct(h);
}

/// grad_theta g(m; theta)^T p, flattened.
template <class Scalar>
Vec<Scalar> grad_g_theta_vjp(const Vec<Scalar>& m, const Theta<Scalar>& theta, const Vec<Scalar>& p) {
  Theta<Scalar> acc = Theta<Scalar>::zeros(theta.size());
  accumulate_grad_theta(m, theta, p, Scalar(1), acc);
  return acc.flatten();
}

template <class Scalar>
struct LogComponentGrad {
  Scalar log_value{};     // log(max(g_i, floor))
  Vec<Scalar> d_m;        // grad_m log g_i
  Vec<Scalar> d_theta;    // grad_theta log g_i, flattened
  bool floored = false;   // g_i < floor: gradients are zero
};

/// Gradients of log g_i for the i-th x-block component, with g_i floored at
/// `floor` inside the log (zero gradient through the floor).
template <class Scalar>
LogComponentGrad<Scalar> grad_log_component(const Vec<Scalar>& m, const Theta<Scalar>& theta, Eigen::Index i,
                                            Scalar floor = Scalar(1e-8)) {
  const Eigen::Index n = theta.size();
  if (i < 0 || i >= n) throw InvalidArgument("component index out of range");
  const Scalar gi = g_dynamics(m, theta)(i);
  LogComponentGrad<Scalar> out;
  if (!(gi >= floor)) {
    out.log_value = std::log(floor);
    out.d_m = Vec<Scalar>::Zero(2 * n);
    out.d_theta = Vec<Scalar>::Zero(theta.layout().size());
    out.floored = true;
    return out;
  }
  Vec<Scalar> e = Vec<Scalar>::Zero(2 * n);
  e(i) = Scalar(1) / gi;
  out.log_value = std::log(gi);
  out.d_m = jac_g_m_vjp(m, theta, e);
  out.d_theta = grad_g_theta_vjp(m, theta, e);
  return out;
}

/// Initial augmented state [chi; 0] for a (possibly relaxed) source indicator.
template <class Scalar>
Vec<Scalar> initial_state(const Vec<Scalar>& indicator) {
  const Eigen::Index n = indicator.size();
  Vec<Scalar> m = Vec<Scalar>::Zero(2 * n);
  m.head(n) = indicator;
  return m;
}

}  // namespace nmf

namespace nmf {

/// Right-hand side of the backward adjoint system in one pass over the MLP:
///   dm = g(m),  dp = -grad_m g^T p,  dq = -grad_theta g^T p  (flattened).
template <class Scalar>
void adjoint_rhs(const Vec<Scalar>& m, const Vec<Scalar>& p, const Theta<Scalar>& theta,
                 Eigen::Ref<Vec<Scalar>> dm, Eigen::Ref<Vec<Scalar>> dp, Eigen::Ref<Vec<Scalar>> dq) {
  const ThetaLayout L = theta.layout();
  const Eigen::Index n = L.n;
  const Vec<Scalar> x = m.head(n), h = m.tail(n);
  const Vec<Scalar> px = p.head(n), ph = p.tail(n);
  const auto& A = theta.A;
  const auto& B = theta.kernel.B;
  const auto& C = theta.kernel.C;
  const MlpTape<Scalar> tape = eps_net_tape(x, h, theta.mlp);
  const Vec<Scalar> Ax = A * x;

  dm.head(n) = Ax - x.cwiseProduct(Ax) + tape.output;
  dm.tail(n) = B.cwiseProduct(x) - C.cwiseProduct(h);

  const Vec<Scalar> d2 = px.cwiseProduct(tape.clamp_mask());
  const Vec<Scalar> d1 = (theta.mlp.W2.transpose() * d2).cwiseProduct(tape.elu_slope());
  const Vec<Scalar> wpx = px - x.cwiseProduct(px);  // (1 - x) .* px

  dp.noalias() = -(theta.mlp.W1.transpose() * d1);
  dp.head(n) -= A.transpose() * wpx - Ax.cwiseProduct(px) + B.cwiseProduct(ph);
  dp.tail(n) += C.cwiseProduct(ph);

  Scalar* q = dq.data();
  Eigen::Map<Mat<Scalar>> dA(q + L.A(), n, n);
  dA.noalias() = -wpx * x.transpose();
  dA.diagonal().setZero();
  Eigen::Map<Mat<Scalar>>(q + L.W1(), n, 2 * n).noalias() = -d1 * tape.input.transpose();
  Eigen::Map<Vec<Scalar>>(q + L.b1(), n) = -d1;
  Eigen::Map<Mat<Scalar>>(q + L.W2(), n, n).noalias() = -d2 * tape.a1.transpose();
  Eigen::Map<Vec<Scalar>>(q + L.b2(), n) = -d2;
  Eigen::Map<Vec<Scalar>>(q + L.B(), n) = -ph.cwiseProduct(x);
  Eigen::Map<Vec<Scalar>>(q + L.C(), n) = ph.cwiseProduct(h);
}

}  // namespace nmf

// Copyright 2026 The lagdyna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Euler-Lagrange acceleration operator with external forcing, its weight
// Jacobian, and the model-learning losses built on top of it.
//
// For a Lagrangian L(q, qdot) and generalized force a:
//
//   qddot = (L_vv + eps I)^-1 (a + L_q - L_vq qdot)
//
// where L_vv = d2L/dqdot2 and (L_vq)_ij = d2L/dqdot_i dq_j.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lagdyna/errors.hpp"
#include "lagdyna/nn.hpp"

namespace lagdyna {

struct GeneralizedState {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;

  int dof() const { return static_cast<int>(q.size()); }

  /// Concatenated (q, qdot), the network input.
  Eigen::VectorXd stacked() const {
    Eigen::VectorXd x(q.size() + qdot.size());
    x << q, qdot;
    return x;
  }

  static GeneralizedState scalar(double q, double qdot) {
    return {Eigen::VectorXd::Constant(1, q), Eigen::VectorXd::Constant(1, qdot)};
  }

  bool operator==(const GeneralizedState& o) const { return q == o.q && qdot == o.qdot; }
};

struct Force {
  Eigen::VectorXd a;

  static Force scalar(double a) { return {Eigen::VectorXd::Constant(1, a)}; }
  static Force zero(int dof) { return {Eigen::VectorXd::Zero(dof)}; }
};

/// Anything exposing value/gradient/hessian over the stacked (q, qdot) input.
template <class M>
concept LagrangianModel = requires(const M& m, const Eigen::VectorXd& x) {
  { m.value(x) } -> std::convertible_to<double>;
  { m.gradient(x) } -> std::convertible_to<Eigen::VectorXd>;
  { m.hessian(x) } -> std::convertible_to<Eigen::MatrixXd>;
};

/// Closed-form Lagrangian, used for oracles and ground-truth substitution.
struct AnalyticLagrangian {
  std::function<double(const Eigen::VectorXd&)> value_fn;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient_fn;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian_fn;

  double value(const Eigen::VectorXd& x) const { return value_fn(x); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return gradient_fn(x); }
  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const { return hessian_fn(x); }
};

/// L = 1/2 qdot^2 - 1/2 q^2 (unit harmonic oscillator).
inline AnalyticLagrangian harmonic_oscillator_lagrangian() {
  return {
      [](const Eigen::VectorXd& x) { return 0.5 * x[1] * x[1] - 0.5 * x[0] * x[0]; },
      [](const Eigen::VectorXd& x) {
        Eigen::VectorXd g(2);
        g << -x[0], x[1];
        return g;
      },
      [](const Eigen::VectorXd&) {
        Eigen::MatrixXd h(2, 2);
        h << -1, 0, 0, 1;
        return h;
      }};
}

/// Rigid pendulum with moment of inertia `inertia` and potential
/// -`torque_scale` cos q (q = 0 upright): L = 1/2 I qdot^2 - k cos q,
/// so qddot = (a + k sin q) / I.
inline AnalyticLagrangian pendulum_lagrangian(double inertia, double torque_scale) {
  return {
      [=](const Eigen::VectorXd& x) {
        return 0.5 * inertia * x[1] * x[1] - torque_scale * std::cos(x[0]);
      },
      [=](const Eigen::VectorXd& x) {
        Eigen::VectorXd g(2);
        g << torque_scale * std::sin(x[0]), inertia * x[1];
        return g;
      },
      [=](const Eigen::VectorXd& x) {
        Eigen::MatrixXd h(2, 2);
        h << torque_scale * std::cos(x[0]), 0, 0, inertia;
        return h;
      }};
}

/// Point-mass pendulum on a massless rod: I = m l^2, k = m g l.
inline AnalyticLagrangian point_pendulum_lagrangian(double m, double l, double g) {
  return pendulum_lagrangian(m * l * l, m * g * l);
}

struct AccelOptions {
  /// Tikhonov damping added to the velocity Hessian before solving.
  double damping = 1e-6;
  /// Condition number above which the solve is refused.
  double max_condition = 1e12;
};

/// Pieces of the Euler-Lagrange solve, kept for reuse by the Jacobian.
struct EulerLagrangeSolve {
  Eigen::MatrixXd mass;   ///< L_vv + eps I
  Eigen::VectorXd accel;  ///< qddot
  double condition = 1;
};

namespace detail {

inline void check_state(const GeneralizedState& s, const Force& f) {
  if (s.q.size() != s.qdot.size() || s.q.size() != f.a.size())
    throw ShapeError("state/force dimension mismatch");
  if (!s.q.allFinite() || !s.qdot.allFinite() || !f.a.allFinite())
    throw DomainError("non-finite state or force");
}

inline double condition_number(const Eigen::MatrixXd& m) {
  if (m.size() == 1) return m(0, 0) == 0.0 ? INFINITY : 1.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double lo = sv[sv.size() - 1];
  return lo == 0.0 ? INFINITY : sv[0] / lo;
}

}  // namespace detail

/// Probe box and target for make_lagrangian_network.
struct LagrangianInit {
  double q_range = 3.14;
  double v_range = 8.0;
  /// Median of tr(L_vv)/n over the probe states after rescaling.
  double target_mass = 1.0;
  int probes = 256;
};

/// Glorot weights made positive-curvature in the velocity inputs.
///
/// Every weight matrix after the first is replaced by its absolute value, so
/// with a convex nondecreasing activation (softplus) the network is convex in
/// its input and L_vv > 0 everywhere. The output layer is then rescaled so the
/// median velocity curvature over uniformly drawn probe states equals
/// `target_mass`. A plain Glorot draw has |L_vv| ~ 1e-2 with a sign that
/// varies across the state box, and gradient training would have to pass
/// through L_vv = 0 where qddot is unbounded.
inline ScalarNetwork make_lagrangian_network(const NetworkArch& arch, std::uint64_t seed,
                                             const LagrangianInit& init = {}) {
  ScalarNetwork net = make_network(arch, seed);
  if (arch.input_dim() % 2 != 0) throw ShapeError("Lagrangian input width must be 2n");
  const int n = arch.input_dim() / 2;
  Eigen::VectorXd w = net.weights();
  for (int l = 1; l < arch.num_layers(); ++l) {
    const auto off = static_cast<Eigen::Index>(net.offset(l));
    const Eigen::Index count = static_cast<Eigen::Index>(arch.widths[l]) * arch.widths[l + 1];
    w.segment(off, count) = w.segment(off, count).cwiseAbs();
  }
  net.set_weights(w);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uq(-init.q_range, init.q_range);
  std::uniform_real_distribution<double> uv(-init.v_range, init.v_range);
  std::vector<double> masses;
  Eigen::VectorXd x(2 * n);
  for (int i = 0; i < init.probes; ++i) {
    for (int k = 0; k < n; ++k) x[k] = uq(rng);
    for (int k = 0; k < n; ++k) x[n + k] = uv(rng);
    masses.push_back(hess_x(net, x).bottomRightCorner(n, n).trace() / n);
  }
  std::nth_element(masses.begin(), masses.begin() + masses.size() / 2, masses.end());
  const double median = masses[masses.size() / 2];
  if (!(median > 0)) throw DomainError("initial network has no positive velocity curvature");
  const int last = arch.num_layers() - 1;
  w.segment(static_cast<Eigen::Index>(net.offset(last)), arch.widths[last]) *=
      init.target_mass / median;
  net.set_weights(w);
  return net;
}

template <LagrangianModel M>
EulerLagrangeSolve solve_euler_lagrange(const M& model, const GeneralizedState& s,
                                        const Force& f, const AccelOptions& opt = {}) {
  detail::check_state(s, f);
  const Eigen::Index n = s.q.size();
  const Eigen::VectorXd x = s.stacked();
  const Eigen::VectorXd g = model.gradient(x);
  const Eigen::MatrixXd H = model.hessian(x);
  EulerLagrangeSolve out;
  out.mass = H.bottomRightCorner(n, n) + opt.damping * Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd rhs = f.a + g.head(n) - H.bottomLeftCorner(n, n) * s.qdot;
  out.condition = detail::condition_number(out.mass);
  if (!(out.condition <= opt.max_condition))
    throw SingularDynamicsError(
        "velocity Hessian is singular (condition " + std::to_string(out.condition) + ")",
        out.condition);
  if (n == 1)
    out.accel = rhs / out.mass(0, 0);
  else
    out.accel = out.mass.partialPivLu().solve(rhs);
  return out;
}

/// qddot = G[L](q, qdot; a).
template <LagrangianModel M>
Eigen::VectorXd accel(const M& model, const GeneralizedState& s, const Force& f,
                      const AccelOptions& opt = {}) {
  return solve_euler_lagrange(model, s, f, opt).accel;
}

namespace detail {

/// Weight gradient of lambda^T qddot with the solve already in hand:
///   d(lambda^T qddot) = mu^T (dL_q - dL_vq qdot - dL_vv qddot),  mu = M^-T lambda,
/// i.e. D f[(mu,0)] - D2 f[(0,mu), (qdot, qddot)].
inline Eigen::VectorXd accel_vjp(const ScalarNetwork& net, const GeneralizedState& s,
                                 const EulerLagrangeSolve& el, const Eigen::VectorXd& lambda) {
  const Eigen::Index n = s.q.size();
  Eigen::VectorXd mu;
  if (n == 1)
    mu = lambda / el.mass(0, 0);
  else
    mu = el.mass.transpose().partialPivLu().solve(lambda);
  const Eigen::VectorXd x = s.stacked();
  Eigen::VectorXd u1(2 * n), u2(2 * n), w(2 * n);
  u1 << mu, Eigen::VectorXd::Zero(n);
  u2 << Eigen::VectorXd::Zero(n), mu;
  w << s.qdot, el.accel;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2 * n);
  Eigen::VectorXd g = directional_grad_w(net, x, u1, zero, {0, 1, 0, 0}).grad_w;
  g -= directional_grad_w(net, x, u2, w, {0, 0, 0, 1}).grad_w;
  return g;
}

}  // namespace detail

/// d qddot / d w, shape n x |w|.
inline Eigen::MatrixXd accel_jac_weights(const ScalarNetwork& net, const GeneralizedState& s,
                                         const Force& f, const AccelOptions& opt = {}) {
  const auto el = solve_euler_lagrange(net, s, f, opt);
  const Eigen::Index n = s.q.size();
  Eigen::MatrixXd J(n, static_cast<Eigen::Index>(net.param_count()));
  for (Eigen::Index i = 0; i < n; ++i)
    J.row(i) = detail::accel_vjp(net, s, el, Eigen::VectorXd::Unit(n, i)).transpose();
  return J;
}

/// Supervised sample for model learning: state, applied force, measured qddot.
struct AccelSample {
  GeneralizedState s;
  Force a;
  Eigen::VectorXd y;
};

struct LossAndGrad {
  double loss = 0;
  Eigen::VectorXd grad;
};

/// (1/N) sum_i ||y_i - G[f_w](s_i; a_i)||^2.
template <LagrangianModel M>
double data_loss(const M& model, std::span<const AccelSample> batch,
                 const AccelOptions& opt = {}) {
  if (batch.empty()) throw PreconditionError("data_loss needs a nonempty batch");
  double total = 0;
  for (const auto& smp : batch) total += (smp.y - accel(model, smp.s, smp.a, opt)).squaredNorm();
  return total / static_cast<double>(batch.size());
}

/// Data loss and its exact weight gradient.
inline LossAndGrad data_loss_grad(const ScalarNetwork& net, std::span<const AccelSample> batch,
                                  const AccelOptions& opt = {}) {
  if (batch.empty()) throw PreconditionError("data_loss needs a nonempty batch");
  LossAndGrad out{0, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()))};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& smp : batch) {
    const auto el = solve_euler_lagrange(net, smp.s, smp.a, opt);
    const Eigen::VectorXd r = smp.y - el.accel;
    out.loss += scale * r.squaredNorm();
    out.grad -= 2.0 * scale * detail::accel_vjp(net, smp.s, el, r);
  }
  return out;
}

/// Mean over consecutive pairs of ||(p(s_{k+1}) - p(s_k))/dt - L_q(s_k) - a_k||^2,
/// where p = dL/dqdot. Vanishes when the trajectory obeys the Euler-Lagrange
/// equations of `model`, up to the O(dt) forward-difference error.
template <LagrangianModel M>
double physical_residual(const M& model, std::span<const GeneralizedState> traj,
                         std::span<const Force> forces, double dt) {
  if (traj.size() < 2) throw PreconditionError("physical residual needs two consecutive states");
  if (forces.size() + 1 < traj.size()) throw ShapeError("need one force per state pair");
  if (!(dt > 0)) throw DomainError("dt must be positive");
  double total = 0;
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    detail::check_state(traj[k], forces[k]);
    const Eigen::Index n = traj[k].q.size();
    const Eigen::VectorXd g0 = model.gradient(traj[k].stacked());
    const Eigen::VectorXd g1 = model.gradient(traj[k + 1].stacked());
    const Eigen::VectorXd r = (g1.tail(n) - g0.tail(n)) / dt - g0.head(n) - forces[k].a;
    total += r.squaredNorm();
  }
  return total / static_cast<double>(traj.size() - 1);
}

/// Physical residual and its exact weight gradient.
inline LossAndGrad physical_residual_grad(const ScalarNetwork& net,
                                          std::span<const GeneralizedState> traj,
                                          std::span<const Force> forces, double dt) {
  if (traj.size() < 2) throw PreconditionError("physical residual needs two consecutive states");
  if (forces.size() + 1 < traj.size()) throw ShapeError("need one force per state pair");
  if (!(dt > 0)) throw DomainError("dt must be positive");
  LossAndGrad out{0, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()))};
  const double scale = 1.0 / static_cast<double>(traj.size() - 1);
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    detail::check_state(traj[k], forces[k]);
    const Eigen::Index n = traj[k].q.size();
    const Eigen::VectorXd x0 = traj[k].stacked(), x1 = traj[k + 1].stacked();
    const Eigen::VectorXd g0 = grad_x(net, x0);
    const Eigen::VectorXd g1 = grad_x(net, x1);
    const Eigen::VectorXd r = (g1.tail(n) - g0.tail(n)) / dt - g0.head(n) - forces[k].a;
    out.loss += scale * r.squaredNorm();
    // d||r||^2 = 2 r^T dr, dr = (D f1[(0,e)] - D f0[(0,e)]) / dt - D f0[(e,0)].
    Eigen::VectorXd dir1(2 * n), dir0(2 * n);
    dir1 << Eigen::VectorXd::Zero(n), r / dt;
    dir0 << r, r / dt;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2 * n);
    out.grad += 2.0 * scale * directional_grad_w(net, x1, dir1, zero, {0, 1, 0, 0}).grad_w;
    out.grad -= 2.0 * scale * directional_grad_w(net, x0, dir0, zero, {0, 1, 0, 0}).grad_w;
  }
  return out;
}

}  // namespace lagdyna

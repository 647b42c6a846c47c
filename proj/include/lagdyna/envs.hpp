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

// Torque-limited pendulum swing-up task (q = 0 upright) and the helpers that
// turn its transitions into acceleration targets.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "lagdyna/errors.hpp"
#include "lagdyna/lnn.hpp"

namespace lagdyna {

struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double gravity = 10.0;
  double dt = 0.05;
  double torque_limit = 2.0;
  double speed_limit = 8.0;
  int horizon = 200;

  void validate() const {
    if (!(mass > 0 && length > 0 && gravity > 0 && dt > 0 && torque_limit > 0 &&
          speed_limit > 0 && horizon > 0))
      throw DomainError("pendulum parameters must all be positive");
  }
};

/// Wraps to [-pi, pi).
inline double wrap_angle(double q) {
  constexpr double kPi = std::numbers::pi;
  if (q >= -kPi && q < kPi) return q;
  double r = std::fmod(q + kPi, 2.0 * kPi);
  if (r < 0) r += 2.0 * kPi;
  r -= kPi;
  return r >= kPi ? -kPi : r;
}

/// -(q^2 + 0.1 qdot^2 + 0.001 a^2); q is expected pre-wrapped.
inline double reward(double q, double qdot, double a) {
  return -(q * q + 0.1 * qdot * qdot + 0.001 * a * a);
}

inline double reward(const GeneralizedState& s, const Force& f) {
  return reward(s.q[0], s.qdot[0], f.a[0]);
}

/// Ground-truth angular acceleration of the uniform rod.
inline double pendulum_accel(const PendulumParams& p, double q, double a) {
  const double ml2 = p.mass * p.length * p.length;
  return 3.0 * p.gravity / (2.0 * p.length) * std::sin(q) + 3.0 / ml2 * a;
}

/// Lagrangian whose Euler-Lagrange equations reproduce pendulum_accel:
/// L = (m l^2 / 6) qdot^2 - (m g l / 2) cos q.
inline AnalyticLagrangian pendulum_ground_truth_lagrangian(const PendulumParams& p) {
  return pendulum_lagrangian(p.mass * p.length * p.length / 3.0,
                             0.5 * p.mass * p.gravity * p.length);
}

/// (m l^2 / 6) qdot^2 + (m g l / 2) cos q.
inline double pendulum_energy(const PendulumParams& p, double q, double qdot) {
  return p.mass * p.length * p.length / 6.0 * qdot * qdot +
         0.5 * p.mass * p.gravity * p.length * std::cos(q);
}

enum class Provenance { kEnvironment, kModel };

struct Transition {
  GeneralizedState s;
  Force a;
  GeneralizedState s_next;
  double r = 0;
  bool done = false;
  Provenance source = Provenance::kEnvironment;
};

struct StepOutcome {
  GeneralizedState s_next;
  double r = 0;
  double applied_torque = 0;
};

/// One semi-implicit Euler step of the ground-truth pendulum. Torque is
/// clamped before use; the reward is charged on the pre-step state and the
/// clamped torque.
inline StepOutcome env_step(const PendulumParams& p, const GeneralizedState& s, double a_raw) {
  if (s.q.size() != 1 || s.qdot.size() != 1) throw ShapeError("pendulum state is one-dimensional");
  if (!std::isfinite(s.q[0]) || !std::isfinite(s.qdot[0]) || !std::isfinite(a_raw))
    throw DomainError("non-finite pendulum state or action");
  const double a = std::clamp(a_raw, -p.torque_limit, p.torque_limit);
  const double q = s.q[0], qdot = s.qdot[0];
  const double qddot = pendulum_accel(p, q, a);
  const double v = std::clamp(qdot + qddot * p.dt, -p.speed_limit, p.speed_limit);
  StepOutcome out;
  out.s_next = GeneralizedState::scalar(wrap_angle(q + v * p.dt), v);
  out.r = reward(wrap_angle(q), qdot, a);
  out.applied_torque = a;
  return out;
}

/// q ~ U(-pi, pi), qdot ~ U(-1, 1).
inline GeneralizedState pendulum_reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uq(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> uv(-1.0, 1.0);
  const double q = uq(rng);
  const double v = uv(rng);
  return GeneralizedState::scalar(q, v);
}

inline GeneralizedState pendulum_reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return pendulum_reset(rng);
}

/// Stateful episode wrapper: tracks the step index and raises `done` at the
/// horizon. Reset draws come from the environment's own generator.
class PendulumEnv {
 public:
  explicit PendulumEnv(PendulumParams params, std::uint64_t seed = 0)
      : params_(params), rng_(seed) {
    params_.validate();
    reset();
  }

  const GeneralizedState& reset() {
    state_ = pendulum_reset(rng_);
    t_ = 0;
    return state_;
  }

  /// Advances one step and returns the full transition record.
  Transition step(double a_raw) {
    auto out = env_step(params_, state_, a_raw);
    Transition tr;
    tr.s = state_;
    tr.a = Force::scalar(out.applied_torque);
    tr.s_next = out.s_next;
    tr.r = out.r;
    ++t_;
    tr.done = t_ >= params_.horizon;
    state_ = std::move(out.s_next);
    return tr;
  }

  const GeneralizedState& state() const { return state_; }
  int t() const { return t_; }
  const PendulumParams& params() const { return params_; }

 private:
  PendulumParams params_;
  std::mt19937_64 rng_;
  GeneralizedState state_;
  int t_ = 0;
};

/// y = (qdot' - qdot) / dt for every environment transition whose successor
/// velocity is not pinned at the speed limit.
inline std::vector<AccelSample> accel_targets(std::span<const Transition> transitions,
                                              const PendulumParams& p) {
  std::vector<AccelSample> out;
  out.reserve(transitions.size());
  for (const auto& tr : transitions) {
    if (std::abs(tr.s_next.qdot[0]) >= p.speed_limit) continue;
    AccelSample smp;
    smp.s = tr.s;
    smp.a = tr.a;
    smp.y = (tr.s_next.qdot - tr.s.qdot) / p.dt;
    out.push_back(std::move(smp));
  }
  if (out.empty()) throw InsufficientData("no usable acceleration targets after filtering");
  return out;
}

/// CSV columns: t,q,qdot,a,r,done.
inline void write_trajectory_csv(std::ostream& os, std::span<const Transition> traj) {
  os << "t,q,qdot,a,r,done\n";
  os.precision(17);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto& tr = traj[t];
    os << t << ',' << tr.s.q[0] << ',' << tr.s.qdot[0] << ',' << tr.a.a[0] << ',' << tr.r << ','
       << (tr.done ? 1 : 0) << '\n';
  }
}

}  // namespace lagdyna

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

// Two-stage explicit Runge-Kutta stepping of second-order dynamics
// qddot = accel(q, qdot; a), with the force held constant over each step.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <functional>
#include <string>
#include <vector>

#include "lagdyna/errors.hpp"
#include "lagdyna/lnn.hpp"

namespace lagdyna {

struct RKCoefficients {
  double c = 2.0 / 3.0;
  double b1 = 0.25;
  double b2 = 0.75;

  /// b1 + b2 = 1 and b2 c = 1/2, checked to `tol`.
  bool second_order(double tol = 1e-15) const {
    return std::abs(b1 + b2 - 1.0) <= tol && std::abs(b2 * c - 0.5) <= tol;
  }
};

struct StepSpec {
  double dt = 0.05;
  RKCoefficients coeffs;
};

template <class F>
concept AccelFunction = requires(const F& f, const GeneralizedState& s, const Force& a) {
  { f(s, a) } -> std::convertible_to<Eigen::VectorXd>;
};

namespace detail {

inline bool finite_state(const GeneralizedState& s) {
  return s.q.allFinite() && s.qdot.allFinite();
}

}  // namespace detail

/// s' = s + dt (b1 k1 + b2 k2), k1 = (qdot, accel(s)), k2 evaluated at s + c dt k1.
template <AccelFunction F>
GeneralizedState rk2_step(const F& accel_fn, const GeneralizedState& s, const Force& f,
                          const StepSpec& spec) {
  if (!(spec.dt > 0) || !std::isfinite(spec.dt)) throw DomainError("dt must be finite and positive");
  const double dt = spec.dt;
  const auto& k = spec.coeffs;

  const Eigen::VectorXd k1q = s.qdot;
  const Eigen::VectorXd k1v = accel_fn(s, f);
  if (!k1v.allFinite()) throw IntegrationBlowup("non-finite acceleration in stage k1", "k1");

  GeneralizedState mid{s.q + k.c * dt * k1q, s.qdot + k.c * dt * k1v};
  if (!detail::finite_state(mid)) throw IntegrationBlowup("non-finite stage state", "k1");
  const Eigen::VectorXd k2q = mid.qdot;
  const Eigen::VectorXd k2v = accel_fn(mid, f);
  if (!k2v.allFinite()) throw IntegrationBlowup("non-finite acceleration in stage k2", "k2");

  GeneralizedState next{s.q + dt * (k.b1 * k1q + k.b2 * k2q),
                        s.qdot + dt * (k.b1 * k1v + k.b2 * k2v)};
  if (!detail::finite_state(next)) throw IntegrationBlowup("non-finite step result", "update");
  return next;
}

struct RolloutStep {
  GeneralizedState s;
  Force f;
  GeneralizedState s_next;
};

struct RolloutResult {
  std::vector<RolloutStep> steps;
  bool blew_up = false;
  std::string error;  ///< reason when blew_up
};

struct RolloutOptions {
  /// Any state component beyond this magnitude aborts the rollout.
  double blowup_limit = 1e6;
  /// Applied to each new state before it is recorded (e.g. angle wrapping).
  std::function<GeneralizedState(GeneralizedState)> normalize;
};

/// Iterates rk2_step, querying the policy once per step. On blowup the
/// completed prefix is returned with `blew_up` set.
template <AccelFunction F, class Policy>
  requires std::invocable<const Policy&, const GeneralizedState&>
RolloutResult rollout(const F& accel_fn, const Policy& policy_fn, const GeneralizedState& s0,
                      int steps, const StepSpec& spec, const RolloutOptions& opt = {}) {
  if (steps < 1) throw PreconditionError("rollout needs steps >= 1");
  RolloutResult out;
  out.steps.reserve(static_cast<std::size_t>(steps));
  GeneralizedState s = s0;
  for (int t = 0; t < steps; ++t) {
    Force f = policy_fn(s);
    GeneralizedState next;
    try {
      next = rk2_step(accel_fn, s, f, spec);
    } catch (const Error& e) {
      out.blew_up = true;
      out.error = e.what();
      return out;
    }
    if (next.q.cwiseAbs().maxCoeff() > opt.blowup_limit ||
        next.qdot.cwiseAbs().maxCoeff() > opt.blowup_limit) {
      out.blew_up = true;
      out.error = "state exceeded blowup limit";
      return out;
    }
    if (opt.normalize) next = opt.normalize(std::move(next));
    out.steps.push_back({s, f, next});
    s = std::move(next);
  }
  return out;
}

}  // namespace lagdyna

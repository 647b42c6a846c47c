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

// Actor-critic learner for one-dimensional torque control: a tanh-squashed
// Gaussian policy trained by the likelihood-ratio gradient weighted with a
// state-action critic, and the critic trained on one-step TD targets.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "lagdyna/envs.hpp"
#include "lagdyna/errors.hpp"
#include "lagdyna/nn.hpp"
#include "lagdyna/optim.hpp"

namespace lagdyna {

/// How raw (q, qdot) is presented to the agent networks.
enum class StateFeatures {
  kScaled,  ///< (q / pi, qdot / speed_scale)
  kTrig,    ///< (cos q, sin q, qdot / speed_scale)
};

struct FeatureMap {
  StateFeatures kind = StateFeatures::kTrig;
  double speed_scale = 8.0;

  int dim() const { return kind == StateFeatures::kTrig ? 3 : 2; }

  void fill(double q, double qdot, Eigen::Ref<Eigen::VectorXd> out) const {
    if (kind == StateFeatures::kTrig) {
      out[0] = std::cos(q);
      out[1] = std::sin(q);
      out[2] = qdot / speed_scale;
    } else {
      out[0] = q / std::numbers::pi;
      out[1] = qdot / speed_scale;
    }
  }

  /// Features for every column of `states` (2 x B raw states).
  Eigen::MatrixXd operator()(const Eigen::MatrixXd& states) const {
    Eigen::MatrixXd x(dim(), states.cols());
    for (Eigen::Index c = 0; c < states.cols(); ++c) {
      Eigen::VectorXd col(dim());
      fill(states(0, c), states(1, c), col);
      x.col(c) = col;
    }
    return x;
  }
};

struct PolicyNet {
  ScalarNetwork mean_net;
  double log_std = 0.0;
  double torque_limit = 2.0;
  double mean_penalty = 0.0;
  FeatureMap features;
  /// Adam over [mean_net weights; log_std]; eta is the actor step size.
  AdamState opt;

  static constexpr double kMinLogStd = -5.0;
  static constexpr double kMaxLogStd = 2.0;

  double mean(const GeneralizedState& s) const {
    Eigen::VectorXd x(features.dim());
    features.fill(s.q[0], s.qdot[0], x);
    return forward(mean_net, x);
  }
};

struct CriticNet {
  ScalarNetwork q_net;
  ScalarNetwork target_net;
  double gamma = 0.99;
  FeatureMap features;
  double torque_limit = 2.0;
  AdamState opt;
  long updates = 0;
  int target_period = 200;

  /// Critic input columns: state features followed by a / torque_limit.
  Eigen::MatrixXd inputs(const Eigen::MatrixXd& states, const Eigen::VectorXd& actions) const {
    Eigen::MatrixXd x(features.dim() + 1, states.cols());
    x.topRows(features.dim()) = features(states);
    x.row(features.dim()) = actions.transpose() / torque_limit;
    return x;
  }

  Eigen::VectorXd evaluate(const Eigen::MatrixXd& states, const Eigen::VectorXd& actions) const {
    return forward_batch(q_net, inputs(states, actions));
  }
  Eigen::VectorXd evaluate_target(const Eigen::MatrixXd& states, const Eigen::VectorXd& actions) const {
    return forward_batch(target_net, inputs(states, actions));
  }
  double value(const GeneralizedState& s, double a) const {
    Eigen::MatrixXd st(2, 1);
    st << s.q[0], s.qdot[0];
    return evaluate(st, Eigen::VectorXd::Constant(1, a))[0];
  }
};

/// Anything that scores (state, action) columns; CriticNet is one.
template <class C>
concept ActionValue = requires(const C& c, const Eigen::MatrixXd& s, const Eigen::VectorXd& a) {
  { c.evaluate(s, a) } -> std::convertible_to<Eigen::VectorXd>;
};

struct AgentConfig {
  std::vector<int> policy_hidden{64, 64};
  std::vector<int> critic_hidden{64, 64};
  Activation activation = Activation::kTanh;
  FeatureMap features;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double gamma = 0.99;
  double init_log_std = 0.0;
  int target_period = 200;
  /// Actions drawn per state for the likelihood-ratio estimate.
  int actor_samples = 4;
  /// Weight of the penalty mean(u_mean^2) on the pre-squash mean. A mean deep
  /// in the tanh tails makes every sampled action equal, which silences the
  /// likelihood-ratio gradient for good.
  double mean_penalty = 1e-3;
};

inline PolicyNet make_policy(const AgentConfig& cfg, double torque_limit, std::uint64_t seed) {
  std::vector<int> widths{cfg.features.dim()};
  widths.insert(widths.end(), cfg.policy_hidden.begin(), cfg.policy_hidden.end());
  widths.push_back(1);
  PolicyNet p;
  p.mean_net = make_network({widths, cfg.activation}, seed);
  // Start close to a zero-mean policy.
  Eigen::VectorXd w = p.mean_net.weights();
  const int last = p.mean_net.arch().num_layers() - 1;
  w.segment(p.mean_net.offset(last), widths[widths.size() - 2]) *= 0.01;
  p.mean_net.set_weights(w);
  p.log_std = cfg.init_log_std;
  p.torque_limit = torque_limit;
  p.mean_penalty = cfg.mean_penalty;
  p.features = cfg.features;
  p.opt = AdamState::adam(static_cast<Eigen::Index>(p.mean_net.param_count()) + 1, cfg.actor_lr);
  return p;
}

inline CriticNet make_critic(const AgentConfig& cfg, double torque_limit, std::uint64_t seed) {
  std::vector<int> widths{cfg.features.dim() + 1};
  widths.insert(widths.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
  widths.push_back(1);
  CriticNet c;
  c.q_net = make_network({widths, cfg.activation}, seed);
  c.target_net = c.q_net;
  c.gamma = cfg.gamma;
  c.features = cfg.features;
  c.torque_limit = torque_limit;
  c.opt = AdamState::adam(static_cast<Eigen::Index>(c.q_net.param_count()), cfg.critic_lr);
  c.target_period = cfg.target_period;
  return c;
}

struct ActionSample {
  Force a;
  double logprob = 0;
  double pre_squash = 0;
};

namespace detail {

/// log(1 - tanh(u)^2), stable for large |u|.
inline double log_one_minus_tanh2(double u) {
  const double au = std::abs(u);
  return 2.0 * (std::numbers::ln2 - au - std::log1p(std::exp(-2.0 * au)));
}

inline double gaussian_logpdf(double x, double mean, double log_std) {
  const double z = (x - mean) * std::exp(-log_std);
  return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

/// Squash-corrected log-density of action `a` under the policy at `s`.
inline double log_prob(const PolicyNet& policy, const GeneralizedState& s, double a) {
  const double y = std::clamp(a / policy.torque_limit, -1.0 + 1e-12, 1.0 - 1e-12);
  const double u = std::atanh(y);
  return detail::gaussian_logpdf(u, policy.mean(s), policy.log_std) -
         std::log(policy.torque_limit) - detail::log_one_minus_tanh2(u);
}

/// Stochastic: u ~ N(mean, sigma^2), a = limit tanh(u). Deterministic: a = limit tanh(mean).
template <class Rng>
ActionSample act(const PolicyNet& policy, const GeneralizedState& s, bool stochastic, Rng& rng) {
  if (!s.q.allFinite() || !s.qdot.allFinite()) throw DomainError("non-finite policy input");
  const double mean = policy.mean(s);
  double u = mean;
  if (stochastic) {
    std::normal_distribution<double> n(0.0, 1.0);
    u = mean + std::exp(policy.log_std) * n(rng);
  }
  ActionSample out;
  out.pre_squash = u;
  out.a = Force::scalar(policy.torque_limit * std::tanh(u));
  out.logprob = detail::gaussian_logpdf(u, mean, policy.log_std) - std::log(policy.torque_limit) -
                detail::log_one_minus_tanh2(u);
  return out;
}

inline double deterministic_action(const PolicyNet& policy, const GeneralizedState& s) {
  return policy.torque_limit * std::tanh(policy.mean(s));
}

/// Deterministic actions for every column of `states`.
inline Eigen::VectorXd deterministic_actions(const PolicyNet& policy, const Eigen::MatrixXd& states) {
  Eigen::VectorXd mean = forward_batch(policy.mean_net, policy.features(states));
  return policy.torque_limit * mean.array().tanh().matrix();
}

/// V' = r + gamma V_target(s', pi_det(s')), bootstrap masked on done.
inline double critic_target(double r, const GeneralizedState& s_next, bool done,
                            const PolicyNet& policy, const CriticNet& critic) {
  if (done || critic.gamma == 0.0) return r;
  Eigen::MatrixXd st(2, 1);
  st << s_next.q[0], s_next.qdot[0];
  const double a = deterministic_action(policy, s_next);
  return r + critic.gamma * critic.evaluate_target(st, Eigen::VectorXd::Constant(1, a))[0];
}

using TransitionBatch = std::vector<const Transition*>;

namespace detail {

struct PackedBatch {
  Eigen::MatrixXd s, s_next;
  Eigen::VectorXd a, r, not_done;
};

inline PackedBatch pack(const TransitionBatch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  PackedBatch p{Eigen::MatrixXd(2, n), Eigen::MatrixXd(2, n), Eigen::VectorXd(n), Eigen::VectorXd(n),
                Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(i)];
    p.s(0, i) = t.s.q[0];
    p.s(1, i) = t.s.qdot[0];
    p.s_next(0, i) = t.s_next.q[0];
    p.s_next(1, i) = t.s_next.qdot[0];
    p.a[i] = t.a.a[0];
    p.r[i] = t.r;
    p.not_done[i] = t.done ? 0.0 : 1.0;
  }
  return p;
}

}  // namespace detail

/// TD targets for a batch, using the target critic and deterministic policy.
inline Eigen::VectorXd critic_targets(const TransitionBatch& batch, const PolicyNet& policy,
                                      const CriticNet& critic) {
  const auto p = detail::pack(batch);
  if (critic.gamma == 0.0) return p.r;
  const Eigen::VectorXd a_next = deterministic_actions(policy, p.s_next);
  const Eigen::VectorXd v_next = critic.evaluate_target(p.s_next, a_next);
  return p.r + critic.gamma * p.not_done.cwiseProduct(v_next);
}

/// Mean squared TD error of the current critic on `batch`, and its gradient.
inline LossAndGrad critic_loss_grad(const CriticNet& critic, const TransitionBatch& batch,
                                    const Eigen::VectorXd& targets) {
  const auto p = detail::pack(batch);
  const Eigen::MatrixXd x = critic.inputs(p.s, p.a);
  const double n = static_cast<double>(batch.size());
  Eigen::VectorXd values = forward_batch(critic.q_net, x);
  const Eigen::VectorXd resid = values - targets;
  LossAndGrad out;
  out.loss = resid.squaredNorm() / n;
  out.grad = grad_w_batch(critic.q_net, x, (2.0 / n) * resid);
  return out;
}

/// One Adam step on the TD loss; returns the loss after the step.
inline double critic_update(CriticNet& critic, const TransitionBatch& batch, const PolicyNet& policy) {
  if (batch.empty()) throw PreconditionError("critic update needs a nonempty batch");
  const Eigen::VectorXd targets = critic_targets(batch, policy, critic);
  const auto lg = critic_loss_grad(critic, batch, targets);
  if (!std::isfinite(lg.loss)) throw TrainingDivergence("non-finite critic loss");
  Eigen::VectorXd w = critic.q_net.weights();
  sgd_or_adam_step_inplace(critic.opt, w, lg.grad);
  critic.q_net.set_weights(std::move(w));
  ++critic.updates;
  if (critic.target_period > 0 && critic.updates % critic.target_period == 0)
    critic.target_net = critic.q_net;
  const auto p = detail::pack(batch);
  const Eigen::VectorXd after = critic.evaluate(p.s, p.a);
  const double loss = (after - targets).squaredNorm() / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw TrainingDivergence("non-finite critic loss");
  return loss;
}

/// Likelihood-ratio estimate of the actor gradient (ascent direction) over
/// [mean_net weights; log_std], plus the mean critic score of the sampled
/// actions. With more than one sample per state the other samples' mean
/// score is subtracted as a baseline.
template <ActionValue Critic, class Rng>
std::pair<Eigen::VectorXd, double> actor_gradient(const PolicyNet& policy, const Eigen::MatrixXd& states,
                                                  const Critic& critic, Rng& rng, int samples) {
  if (states.cols() == 0) throw PreconditionError("actor update needs a nonempty batch");
  if (samples < 1) throw PreconditionError("actor update needs at least one sample per state");
  const Eigen::Index B = states.cols();
  const Eigen::Index K = samples;
  const Eigen::MatrixXd x = policy.features(states);
  const Eigen::VectorXd mean = forward_batch(policy.mean_net, x);
  const double sigma = std::exp(policy.log_std);
  std::normal_distribution<double> n01(0.0, 1.0);

  Eigen::MatrixXd eps(K, B);
  for (Eigen::Index i = 0; i < B; ++i)
    for (Eigen::Index k = 0; k < K; ++k) eps(k, i) = n01(rng);
  Eigen::MatrixXd rep_states(2, B * K);
  Eigen::VectorXd actions(B * K);
  for (Eigen::Index i = 0; i < B; ++i)
    for (Eigen::Index k = 0; k < K; ++k) {
      rep_states.col(i * K + k) = states.col(i);
      actions[i * K + k] = policy.torque_limit * std::tanh(mean[i] + sigma * eps(k, i));
    }
  const Eigen::VectorXd q = critic.evaluate(rep_states, actions);

  Eigen::VectorXd mean_adj(B);
  double logstd_grad = 0, objective = 0;
  const double norm = 1.0 / static_cast<double>(B * K);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double sum = q.segment(i * K, K).sum();
    double g_mean = 0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double qk = q[i * K + k];
      const double adv = K > 1 ? qk - (sum - qk) / static_cast<double>(K - 1) : qk;
      const double e = eps(k, i);
      // d log N(u; mu, sigma) / d mu = e / sigma; / d log sigma = e^2 - 1.
      g_mean += adv * e / sigma;
      logstd_grad += norm * adv * (e * e - 1.0);
      objective += norm * qk;
    }
    mean_adj[i] = norm * g_mean - 2.0 * policy.mean_penalty * mean[i] / static_cast<double>(B);
  }
  Eigen::VectorXd grad(static_cast<Eigen::Index>(policy.mean_net.param_count()) + 1);
  grad.head(grad.size() - 1) = grad_w_batch(policy.mean_net, x, mean_adj);
  grad[grad.size() - 1] = logstd_grad;
  return {grad, objective};
}

/// One ascent step on the sampled policy-gradient estimate; returns the
/// mean critic score of the sampled actions before the step.
template <ActionValue Critic, class Rng>
double actor_update(PolicyNet& policy, const Eigen::MatrixXd& states, const Critic& critic, Rng& rng,
                    int samples) {
  auto [grad, objective] = actor_gradient(policy, states, critic, rng, samples);
  if (!grad.allFinite() || !std::isfinite(objective))
    throw TrainingDivergence("non-finite actor gradient");
  Eigen::VectorXd theta(grad.size());
  theta << policy.mean_net.weights(), policy.log_std;
  sgd_or_adam_step_inplace(policy.opt, theta, -grad);
  policy.mean_net.set_weights(theta.head(theta.size() - 1));
  policy.log_std = std::clamp(theta[theta.size() - 1], PolicyNet::kMinLogStd, PolicyNet::kMaxLogStd);
  return objective;
}

/// Mean undiscounted return of deterministic-mode episodes in the true
/// environment. Episode start states come from `seed`.
inline double evaluate_policy(const PolicyNet& policy, const PendulumParams& params, int episodes,
                              std::uint64_t seed) {
  if (episodes < 1) throw PreconditionError("evaluation needs at least one episode");
  PendulumEnv env(params, seed);
  double total = 0;
  for (int e = 0; e < episodes; ++e) {
    if (e > 0) env.reset();
    for (int t = 0; t < params.horizon; ++t) {
      const auto tr = env.step(deterministic_action(policy, env.state()));
      total += tr.r;
    }
  }
  return total / episodes;
}

}  // namespace lagdyna

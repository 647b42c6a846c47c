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

// Dyna loop: real data collection, gated Lagrangian-model training, short
// model rollouts into a synthetic buffer, and actor-critic updates on the
// union of both buffers. With `model_free` set every model step is skipped.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lagdyna/agent.hpp"
#include "lagdyna/envs.hpp"
#include "lagdyna/errors.hpp"
#include "lagdyna/integrate.hpp"
#include "lagdyna/lnn.hpp"
#include "lagdyna/nn.hpp"
#include "lagdyna/optim.hpp"

namespace lagdyna {

/// Fixed-capacity ring of transitions with its own sampling generator.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000, std::uint64_t seed = 0)
      : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw PreconditionError("replay buffer capacity must be positive");
  }

  void push(Transition t) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return storage_.empty(); }

  /// i-th oldest transition still held.
  const Transition& at(std::size_t i) const {
    if (i >= storage_.size()) throw PreconditionError("replay index out of range");
    return storage_[(head_ + i) % storage_.size()];
  }

  /// `n` draws uniformly with replacement.
  TransitionBatch sample(std::size_t n) {
    if (storage_.empty()) throw InsufficientData("cannot sample an empty replay buffer");
    std::uniform_int_distribution<std::size_t> u(0, storage_.size() - 1);
    TransitionBatch out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&storage_[u(rng_)]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> storage_;
  std::size_t head_ = 0;
  std::mt19937_64 rng_;
};

enum class ModelOptimizer { kAdam, kEkf };

struct DynaConfig {
  PendulumParams env;
  AgentConfig agent;

  int episodes = 300;
  int steps_per_episode = 200;
  std::uint64_t seed = 0;
  bool model_free = false;

  int rollout_rounds = 10;
  int rollout_batch = 32;
  int rollout_horizon = 5;
  std::size_t env_threshold = 1000;
  std::size_t mod_threshold = 1000;
  /// Gate on the post-training data loss divided by the target variance.
  double data_loss_threshold = 0.1;
  int model_train_every = 1;

  bool physical_loss = false;
  double physical_weight = 0.0;
  int physical_batch = 32;
  double physical_lr = 1e-4;

  ModelOptimizer optimizer = ModelOptimizer::kAdam;
  std::vector<int> lnn_hidden{32, 32};
  Activation lnn_activation = Activation::kSoftplus;
  LagrangianInit lnn_init;
  /// Transitions drawn from D_env for each model-training call.
  int model_samples = 512;
  int adam_epochs = 8;
  int adam_batch = 64;
  double adam_lr = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int ekf_passes = 1;
  double ekf_p0 = 1e-3;
  double ekf_q = 1e-6;
  double ekf_r = 0.05;

  /// Actor-critic updates after every episode, on D_env or D_env and D_mod.
  int agent_updates = 200;
  /// Extra updates per episode once D_mod is populated (planning steps).
  int planning_updates = 400;
  int agent_batch = 64;
  /// Episodes of uniform random actions before the policy takes over.
  int random_episodes = 0;

  std::size_t env_capacity = 100000;
  std::size_t mod_capacity = 100000;
  int eval_every = 1000;
  int eval_episodes = 5;

  void validate() const {
    env.validate();
    auto positive = [](long v, const char* name) {
      if (v <= 0) throw PreconditionError(std::string(name) + " must be positive");
    };
    positive(episodes, "episodes");
    positive(steps_per_episode, "steps_per_episode");
    positive(rollout_rounds, "rollout_rounds");
    positive(rollout_batch, "rollout_batch");
    positive(rollout_horizon, "rollout_horizon");
    positive(model_train_every, "model_train_every");
    positive(physical_batch, "physical_batch");
    positive(model_samples, "model_samples");
    positive(adam_epochs, "adam_epochs");
    positive(adam_batch, "adam_batch");
    positive(ekf_passes, "ekf_passes");
    positive(agent_batch, "agent_batch");
    positive(eval_every, "eval_every");
    positive(eval_episodes, "eval_episodes");
    positive(static_cast<long>(env_capacity), "env_capacity");
    positive(static_cast<long>(mod_capacity), "mod_capacity");
    positive(agent.actor_samples, "actor_samples");
    if (agent_updates < 0 || planning_updates < 0 || random_episodes < 0)
      throw PreconditionError("update counts must be nonnegative");
    if (!(data_loss_threshold >= 0) || !(physical_weight >= 0))
      throw PreconditionError("thresholds and weights must be nonnegative");
    if (!(adam_lr > 0 && ekf_p0 > 0 && ekf_q >= 0 && ekf_r > 0 && physical_lr > 0))
      throw PreconditionError("optimizer hyperparameters out of range");
  }
};

struct EvalPoint {
  long env_steps = 0;
  double avg_return = 0;
};

struct RunReport {
  std::vector<EvalPoint> curve;
  long env_steps = 0;
  long model_updates = 0;
  long rollout_rounds = 0;
  long model_transitions = 0;
  long rollout_blowups = 0;
  long physical_updates = 0;
  long agent_updates = 0;
  std::optional<double> last_data_loss;  ///< normalized
  std::vector<std::string> log;
  std::optional<ScalarNetwork> model;
  PolicyNet policy;
  CriticNet critic;
  bool aborted = false;
  std::string error;
};

/// Mutable model-side state carried across episodes.
struct ModelState {
  ScalarNetwork net;
  AdamState adam;
  GaussianWeightBelief belief;
  std::optional<double> last_loss;
};

inline ModelState make_model_state(const DynaConfig& cfg, std::uint64_t seed) {
  std::vector<int> widths{2};
  widths.insert(widths.end(), cfg.lnn_hidden.begin(), cfg.lnn_hidden.end());
  widths.push_back(1);
  ModelState m;
  m.net = make_lagrangian_network({widths, cfg.lnn_activation}, seed, cfg.lnn_init);
  m.adam = AdamState::adam(static_cast<Eigen::Index>(m.net.param_count()), cfg.adam_lr);
  m.adam.beta1 = cfg.adam_beta1;
  m.adam.beta2 = cfg.adam_beta2;
  m.adam.eps = cfg.adam_eps;
  m.belief = GaussianWeightBelief::isotropic(m.net.weights(), cfg.ekf_p0, cfg.ekf_q, cfg.ekf_r);
  return m;
}

/// Runs `steps` environment steps with the stochastic policy (or uniform
/// random torques when `random_actions`), appending every transition and
/// resetting on done. Returns the number of steps taken.
template <class Rng>
int collect_real(PendulumEnv& env, const PolicyNet& policy, ReplayBuffer& d_env, int steps, Rng& rng,
                 bool random_actions = false) {
  std::uniform_real_distribution<double> ua(-env.params().torque_limit, env.params().torque_limit);
  for (int i = 0; i < steps; ++i) {
    const double a = random_actions ? ua(rng) : act(policy, env.state(), true, rng).a.a[0];
    Transition tr = env.step(a);
    const bool done = tr.done;
    tr.source = Provenance::kEnvironment;
    d_env.push(std::move(tr));
    if (done) env.reset();
  }
  return steps;
}

/// Trains the model on a sample of D_env when size(D_env) > env_threshold and
/// returns the normalized post-training data loss; no-op otherwise.
inline std::optional<double> maybe_train_model(ReplayBuffer& d_env, ModelState& model,
                                               const DynaConfig& cfg, std::uint64_t seed) {
  if (d_env.size() <= cfg.env_threshold) return std::nullopt;
  const TransitionBatch picked = d_env.sample(static_cast<std::size_t>(cfg.model_samples));
  std::vector<Transition> rows;
  rows.reserve(picked.size());
  for (const Transition* t : picked) rows.push_back(*t);
  const std::vector<AccelSample> data = accel_targets(rows, cfg.env);

  double mean = 0, var = 0;
  for (const auto& s : data) mean += s.y[0];
  mean /= static_cast<double>(data.size());
  for (const auto& s : data) var += (s.y[0] - mean) * (s.y[0] - mean);
  var = std::max(var / static_cast<double>(data.size()), 1e-12);

  double loss = 0;
  if (cfg.optimizer == ModelOptimizer::kAdam) {
    auto res = adam_train_epochs(model.net, data, model.adam, cfg.adam_epochs, cfg.adam_batch, seed);
    model.net = std::move(res.net);
    model.adam = std::move(res.state);
    loss = res.loss_trace.back();
  } else {
    model.belief.mean = model.net.weights();
    auto res = ekf_train_epochs(model.net, data, std::move(model.belief), cfg.ekf_passes);
    model.net = std::move(res.net);
    model.belief = std::move(res.belief);
    loss = res.loss_trace.back();
  }
  model.last_loss = loss / var;
  return model.last_loss;
}

struct RolloutStats {
  long added = 0;
  long blowups = 0;
};

inline bool rollout_gate_open(const std::optional<double>& data_loss, const DynaConfig& cfg) {
  return data_loss && *data_loss < cfg.data_loss_threshold;
}

/// L_M rounds of n_b short rollouts of `lagrangian` from buffer states. Start
/// states come from D_env alone until D_mod is nonempty, then half from
/// each. Nothing happens unless the data-loss gate is open.
template <LagrangianModel M, class Rng>
RolloutStats model_rollouts(const M& lagrangian, const std::optional<double>& data_loss,
                            const PolicyNet& policy, ReplayBuffer& d_env, ReplayBuffer& d_mod,
                            const DynaConfig& cfg, Rng& rng) {
  RolloutStats stats;
  if (!rollout_gate_open(data_loss, cfg) || d_env.empty()) return stats;
  const PendulumParams& p = cfg.env;
  const AccelOptions accel_opt;
  auto accel_fn = [&](const GeneralizedState& s, const Force& f) {
    return accel(lagrangian, s, f, accel_opt);
  };
  auto policy_fn = [&](const GeneralizedState& s) { return act(policy, s, true, rng).a; };
  RolloutOptions ropt;
  ropt.normalize = [&p](GeneralizedState s) {
    s.q[0] = wrap_angle(s.q[0]);
    s.qdot[0] = std::clamp(s.qdot[0], -p.speed_limit, p.speed_limit);
    return s;
  };
  const StepSpec spec{p.dt, {}};
  for (int round = 0; round < cfg.rollout_rounds; ++round) {
    const std::size_t from_mod = d_mod.empty() ? 0 : static_cast<std::size_t>(cfg.rollout_batch / 2);
    TransitionBatch starts = d_env.sample(static_cast<std::size_t>(cfg.rollout_batch) - from_mod);
    if (from_mod > 0) {
      const TransitionBatch extra = d_mod.sample(from_mod);
      starts.insert(starts.end(), extra.begin(), extra.end());
    }
    std::vector<GeneralizedState> s0;
    s0.reserve(starts.size());
    for (const Transition* t : starts) s0.push_back(t->s);
    for (const auto& s : s0) {
      const RolloutResult res = rollout(accel_fn, policy_fn, s, cfg.rollout_horizon, spec, ropt);
      if (res.blew_up) ++stats.blowups;
      for (const auto& step : res.steps) {
        Transition tr;
        tr.s = step.s;
        tr.a = step.f;
        tr.s_next = step.s_next;
        tr.r = reward(wrap_angle(step.s.q[0]), step.s.qdot[0], step.f.a[0]);
        tr.done = false;
        tr.source = Provenance::kModel;
        d_mod.push(std::move(tr));
        ++stats.added;
      }
    }
  }
  return stats;
}

template <class Rng>
RolloutStats model_rollouts(const ModelState& model, const PolicyNet& policy, ReplayBuffer& d_env,
                            ReplayBuffer& d_mod, const DynaConfig& cfg, Rng& rng) {
  return model_rollouts(model.net, model.last_loss, policy, d_env, d_mod, cfg, rng);
}

/// One weighted gradient step on the physical residual over sampled D_mod
/// transitions, each transition being one consecutive state pair. Returns
/// false when nothing was done.
inline bool physical_loss_update(ModelState& model, ReplayBuffer& d_env, ReplayBuffer& d_mod,
                                 const DynaConfig& cfg) {
  if (!cfg.physical_loss || cfg.physical_weight == 0.0) return false;
  if (d_env.size() <= cfg.env_threshold || d_mod.size() <= cfg.mod_threshold) return false;
  const TransitionBatch batch = d_mod.sample(static_cast<std::size_t>(cfg.physical_batch));
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.net.param_count()));
  for (const Transition* t : batch) {
    const GeneralizedState pair[2] = {t->s, t->s_next};
    const Force force[1] = {t->a};
    grad += physical_residual_grad(model.net, pair, force, cfg.env.dt).grad;
  }
  grad *= cfg.physical_weight / static_cast<double>(batch.size());
  if (!grad.allFinite()) throw TrainingDivergence("non-finite physical-loss gradient");
  model.net.set_weights(model.net.weights() - cfg.physical_lr * grad);
  return true;
}

/// Agent batch: all from D_env, or half and half once D_mod is populated.
inline TransitionBatch sample_agent_batch(ReplayBuffer& d_env, ReplayBuffer& d_mod, std::size_t n) {
  if (d_mod.empty()) return d_env.sample(n);
  TransitionBatch out = d_env.sample(n - n / 2);
  const TransitionBatch extra = d_mod.sample(n / 2);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

template <class Rng>
void agent_step(PolicyNet& policy, CriticNet& critic, const TransitionBatch& batch, int samples,
                Rng& rng) {
  critic_update(critic, batch, policy);
  Eigen::MatrixXd states(2, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    states(0, static_cast<Eigen::Index>(i)) = batch[i]->s.q[0];
    states(1, static_cast<Eigen::Index>(i)) = batch[i]->s.qdot[0];
  }
  actor_update(policy, states, critic, rng, samples);
}

/// Independent streams derived from the run seed.
struct RunSeeds {
  std::uint64_t env, policy, critic, model, d_env, d_mod, act, update, eval, train;
  explicit RunSeeds(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      0x6c6e6eu};
    std::uint32_t raw[20];
    seq.generate(std::begin(raw), std::end(raw));
    std::uint64_t* dst[] = {&env, &policy, &critic, &model, &d_env, &d_mod, &act, &update, &eval, &train};
    for (int i = 0; i < 10; ++i)
      *dst[i] = (static_cast<std::uint64_t>(raw[2 * i]) << 32) | raw[2 * i + 1];
  }
};

/// The full Dyna loop for cfg.episodes episodes. Errors abort the run and are
/// reported with whatever was completed.
inline RunReport run(const DynaConfig& cfg) {
  cfg.validate();
  const RunSeeds seeds(cfg.seed);
  RunReport rep;
  PendulumEnv env(cfg.env, seeds.env);
  rep.policy = make_policy(cfg.agent, cfg.env.torque_limit, seeds.policy);
  rep.critic = make_critic(cfg.agent, cfg.env.torque_limit, seeds.critic);
  ReplayBuffer d_env(cfg.env_capacity, seeds.d_env);
  ReplayBuffer d_mod(cfg.mod_capacity, seeds.d_mod);
  std::mt19937_64 act_rng(seeds.act), upd_rng(seeds.update), model_rng(seeds.model);
  std::optional<ModelState> model;
  if (!cfg.model_free) model = make_model_state(cfg, seeds.model);

  auto note = [&rep](int episode, const std::string& msg) {
    rep.log.push_back("episode " + std::to_string(episode) + ": " + msg);
  };

  int episode = 0;
  bool rollouts_open = false;
  try {
    for (episode = 1; episode <= cfg.episodes; ++episode) {
      const bool random_actions = episode <= cfg.random_episodes;
      for (int t = 0; t < cfg.steps_per_episode; ++t) {
        collect_real(env, rep.policy, d_env, 1, act_rng, random_actions);
        ++rep.env_steps;
        if (rep.env_steps % cfg.eval_every == 0)
          rep.curve.push_back({rep.env_steps, evaluate_policy(rep.policy, cfg.env, cfg.eval_episodes,
                                                              seeds.eval)});
      }

      if (model) {
        if (episode % cfg.model_train_every == 0) {
          const auto loss = maybe_train_model(d_env, *model, cfg, model_rng());
          if (loss) {
            ++rep.model_updates;
            std::ostringstream msg;
            msg << "model trained, normalized data loss " << *loss;
            note(episode, msg.str());
          }
        }
        const bool gate = rollout_gate_open(model->last_loss, cfg);
        if (gate != rollouts_open && model->last_loss) {
          note(episode, gate ? "data-loss gate open, model rollouts enabled"
                             : "data-loss gate closed, model rollouts paused");
          rollouts_open = gate;
        }
        const auto stats = model_rollouts(*model, rep.policy, d_env, d_mod, cfg, act_rng);
        if (stats.added > 0 || stats.blowups > 0) {
          rep.rollout_rounds += cfg.rollout_rounds;
          rep.model_transitions += stats.added;
          rep.rollout_blowups += stats.blowups;
        }
        if (physical_loss_update(*model, d_env, d_mod, cfg)) ++rep.physical_updates;
        rep.last_data_loss = model->last_loss;
      }

      const int updates = cfg.agent_updates + (d_mod.empty() ? 0 : cfg.planning_updates);
      if (d_env.size() >= static_cast<std::size_t>(cfg.agent_batch)) {
        for (int u = 0; u < updates; ++u) {
          agent_step(rep.policy, rep.critic,
                     sample_agent_batch(d_env, d_mod, static_cast<std::size_t>(cfg.agent_batch)),
                     cfg.agent.actor_samples, upd_rng);
          ++rep.agent_updates;
        }
      }
    }
  } catch (const Error& e) {
    rep.aborted = true;
    rep.error = "episode " + std::to_string(episode) + ": " + e.what();
  }
  if (model) rep.model = model->net;
  return rep;
}

}  // namespace lagdyna

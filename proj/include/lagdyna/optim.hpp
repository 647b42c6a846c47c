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

// Weight learning for the Lagrangian network: mini-batch Adam/SGD on the
// acceleration loss, and an extended Kalman filter that treats the weights
// as a random-walk state observed through the Euler-Lagrange operator.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lagdyna/errors.hpp"
#include "lagdyna/lnn.hpp"
#include "lagdyna/nn.hpp"

namespace lagdyna {

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;
  double eta = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool plain_sgd = false;

  static AdamState adam(Eigen::Index size, double eta) {
    AdamState s;
    s.m = Eigen::VectorXd::Zero(size);
    s.v = Eigen::VectorXd::Zero(size);
    s.eta = eta;
    return s;
  }
  static AdamState sgd(Eigen::Index size, double eta) {
    AdamState s = adam(size, eta);
    s.plain_sgd = true;
    return s;
  }
};

/// One descent step w <- w - eta * (direction). Plain SGD uses the raw
/// gradient; Adam uses bias-corrected first/second moments.
inline void sgd_or_adam_step_inplace(AdamState& st, Eigen::VectorXd& w, const Eigen::VectorXd& grad) {
  if (grad.size() != w.size() || st.m.size() != w.size() || st.v.size() != w.size())
    throw ShapeError("optimizer state/weight/gradient size mismatch");
  if (!grad.allFinite()) throw TrainingDivergence("non-finite gradient");
  if (!(st.eta >= 0) || st.beta1 < 0 || st.beta1 >= 1 || st.beta2 < 0 || st.beta2 >= 1)
    throw DomainError("invalid optimizer hyperparameters");
  ++st.t;
  if (st.plain_sgd) {
    w -= st.eta * grad;
    return;
  }
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  w.array() -= st.eta * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

inline std::pair<AdamState, Eigen::VectorXd> sgd_or_adam_step(AdamState state, Eigen::VectorXd w,
                                                              const Eigen::VectorXd& grad) {
  sgd_or_adam_step_inplace(state, w, grad);
  return {std::move(state), std::move(w)};
}

/// Gaussian belief over the flat weight vector.
struct GaussianWeightBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  /// Isotropic process noise q I; ignored when `process_noise_full` is set.
  double process_noise = 0;
  Eigen::MatrixXd process_noise_full;
  Eigen::MatrixXd meas_noise;

  static GaussianWeightBelief isotropic(const Eigen::VectorXd& mean, double p0, double q, double r,
                                        int obs_dim = 1) {
    GaussianWeightBelief b;
    b.mean = mean;
    b.cov = p0 * Eigen::MatrixXd::Identity(mean.size(), mean.size());
    b.process_noise = q;
    b.meas_noise = r * Eigen::MatrixXd::Identity(obs_dim, obs_dim);
    return b;
  }
};

/// Symmetric to `sym_tol` (max abs entry of P - P^T) and min eigenvalue of the
/// symmetrized matrix at least -`eig_tol`.
inline bool covariance_is_psd(const Eigen::MatrixXd& P, double eig_tol = 1e-8,
                              double sym_tol = 1e-12) {
  if (P.rows() != P.cols() || !P.allFinite()) return false;
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > sym_tol) return false;
  const Eigen::MatrixXd S = 0.5 * (P + P.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -eig_tol;
}

namespace detail {

inline void mirror_lower(Eigen::MatrixXd& P) {
  P.triangularView<Eigen::StrictlyUpper>() = P.transpose();
}

}  // namespace detail

/// Random-walk prediction: mean unchanged, P <- P + Q.
inline void ekf_predict_inplace(GaussianWeightBelief& b) {
  if (b.process_noise_full.size() > 0) {
    if (b.process_noise_full.rows() != b.cov.rows() || b.process_noise_full.cols() != b.cov.cols())
      throw ShapeError("process noise shape mismatch");
    b.cov += b.process_noise_full;
    b.cov = (0.5 * (b.cov + b.cov.transpose())).eval();
  } else if (b.process_noise != 0) {
    b.cov.diagonal().array() += b.process_noise;
  }
}

inline GaussianWeightBelief ekf_predict(GaussianWeightBelief b) {
  ekf_predict_inplace(b);
  return b;
}

struct EkfUpdateOptions {
  double max_condition = 1e12;
};

/// K = P H^T (H P H^T + R)^-1, mean += K (y - y_pred), P <- (I - K H) P,
/// with P kept exactly symmetric.
inline void ekf_update_inplace(GaussianWeightBelief& b, const Eigen::MatrixXd& H,
                               const Eigen::VectorXd& y, const Eigen::VectorXd& y_pred,
                               const EkfUpdateOptions& opt = {}) {
  const Eigen::Index n = y.size();
  if (H.rows() != n || H.cols() != b.mean.size() || y_pred.size() != n ||
      b.meas_noise.rows() != n || b.meas_noise.cols() != n)
    throw ShapeError("inconsistent shapes in EKF update");
  const Eigen::MatrixXd PHt = b.cov * H.transpose();
  Eigen::MatrixXd S = H * PHt + b.meas_noise;
  S = (0.5 * (S + S.transpose())).eval();
  const double cond = detail::condition_number(S);
  if (!(cond <= opt.max_condition))
    throw IllConditionedUpdate("innovation covariance ill-conditioned (condition " +
                                   std::to_string(cond) + ")",
                               cond);
  const Eigen::VectorXd innov = y - y_pred;
  if (n == 1) {
    const double s = S(0, 0);
    b.mean += PHt.col(0) * (innov[0] / s);
    b.cov.selfadjointView<Eigen::Lower>().rankUpdate(PHt.col(0), -1.0 / s);
  } else {
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
      throw IllConditionedUpdate("innovation covariance not positive definite", cond);
    b.mean += PHt * llt.solve(innov);
    // P - PHt S^-1 PHt^T = P - (PHt L^-T)(PHt L^-T)^T
    const Eigen::MatrixXd G = llt.matrixL().solve(PHt.transpose()).transpose();
    b.cov.selfadjointView<Eigen::Lower>().rankUpdate(G, -1.0);
  }
  detail::mirror_lower(b.cov);
  if (!b.mean.allFinite()) throw TrainingDivergence("non-finite EKF posterior mean");
}

inline GaussianWeightBelief ekf_update(GaussianWeightBelief b, const Eigen::MatrixXd& H,
                                       const Eigen::VectorXd& y, const Eigen::VectorXd& y_pred,
                                       const EkfUpdateOptions& opt = {}) {
  ekf_update_inplace(b, H, y, y_pred, opt);
  return b;
}

/// One entry per pass/epoch: mean squared acceleration error on the full
/// training set after that pass.
using LossTrace = std::vector<double>;

inline void write_loss_trace_csv(std::ostream& os, const LossTrace& trace) {
  os << "pass_index,loss\n";
  os.precision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) os << (i + 1) << ',' << trace[i] << '\n';
}

struct EkfTrainResult {
  ScalarNetwork net;
  GaussianWeightBelief belief;
  LossTrace loss_trace;
};

/// Sequential predict/update over the dataset, `passes` times.
inline EkfTrainResult ekf_train_epochs(ScalarNetwork net, std::span<const AccelSample> data,
                                       GaussianWeightBelief belief, int passes,
                                       const AccelOptions& accel_opt = {},
                                       const EkfUpdateOptions& upd_opt = {}) {
  if (data.empty()) throw PreconditionError("EKF training needs a nonempty dataset");
  if (passes < 1) throw PreconditionError("EKF training needs passes >= 1");
  if (belief.mean.size() != static_cast<Eigen::Index>(net.param_count()))
    throw ShapeError("belief dimension != network parameter count");
  net.set_weights(belief.mean);
  EkfTrainResult out;
  for (int p = 0; p < passes; ++p) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& smp = data[i];
      try {
        ekf_predict_inplace(belief);
        const auto el = solve_euler_lagrange(net, smp.s, smp.a, accel_opt);
        const Eigen::Index n = smp.s.q.size();
        Eigen::MatrixXd H(n, belief.mean.size());
        for (Eigen::Index k = 0; k < n; ++k)
          H.row(k) = detail::accel_vjp(net, smp.s, el, Eigen::VectorXd::Unit(n, k)).transpose();
        ekf_update_inplace(belief, H, smp.y, el.accel, upd_opt);
        net.set_weights(belief.mean);
      } catch (const SingularDynamicsError& e) {
        throw SingularDynamicsError(std::string(e.what()) + " at sample " + std::to_string(i),
                                    e.condition());
      } catch (const IllConditionedUpdate& e) {
        throw IllConditionedUpdate(std::string(e.what()) + " at sample " + std::to_string(i),
                                   e.condition());
      } catch (const DomainError& e) {
        throw TrainingDivergence(std::string(e.what()) + " at sample " + std::to_string(i));
      }
    }
    const double loss = data_loss(net, data, accel_opt);
    if (!std::isfinite(loss)) throw TrainingDivergence("non-finite loss after EKF pass");
    out.loss_trace.push_back(loss);
  }
  out.net = std::move(net);
  out.belief = std::move(belief);
  return out;
}

struct AdamTrainResult {
  ScalarNetwork net;
  AdamState state;
  LossTrace loss_trace;
};

/// Mini-batch descent with a fresh uniform shuffle every epoch.
inline AdamTrainResult adam_train_epochs(ScalarNetwork net, std::span<const AccelSample> data,
                                         AdamState state, int epochs, int batch_size,
                                         std::uint64_t seed, const AccelOptions& accel_opt = {}) {
  if (data.empty()) throw PreconditionError("Adam training needs a nonempty dataset");
  if (epochs < 1) throw PreconditionError("Adam training needs epochs >= 1");
  if (batch_size < 1) throw PreconditionError("batch size must be positive");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<AccelSample> batch;
  AdamTrainResult out;
  Eigen::VectorXd w = net.weights();
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
      const auto lg = data_loss_grad(net, batch, accel_opt);
      if (!std::isfinite(lg.loss)) throw TrainingDivergence("non-finite mini-batch loss");
      sgd_or_adam_step_inplace(state, w, lg.grad);
      net.set_weights(w);
    }
    const double loss = data_loss(net, data, accel_opt);
    if (!std::isfinite(loss)) throw TrainingDivergence("non-finite loss after epoch");
    out.loss_trace.push_back(loss);
  }
  out.net = std::move(net);
  out.state = std::move(state);
  return out;
}

}  // namespace lagdyna

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

// Fast invariant suite behind `lagdyna check`: finite-difference oracles for
// every derivative, the Euler-Lagrange operator against the closed-form
// pendulum, RK-2 order, and the EKF against a textbook Kalman filter.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lagdyna/integrate.hpp"
#include "lagdyna/lnn.hpp"
#include "lagdyna/nn.hpp"
#include "lagdyna/optim.hpp"

namespace lagdyna::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Central-difference gradient with step h_i = rel * (1 + |x_i|).
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double rel = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel * (1.0 + std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

/// Second-order central differences of f.
inline Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, double rel = 1e-4) {
  const Eigen::Index d = x.size();
  Eigen::MatrixXd H(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double hi = rel * (1.0 + std::abs(x[i]));
      const double hj = rel * (1.0 + std::abs(x[j]));
      auto at = [&](double si, double sj) {
        Eigen::VectorXd y = x;
        y[i] += si * hi;
        y[j] += sj * hj;
        return f(y);
      };
      H(i, j) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * hi * hj);
    }
  }
  return H;
}

/// Central-difference Jacobian of a vector function.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (f(xp) - f(xm)) / (2 * h);
  }
  return J;
}

/// |a - b| / max(|a|, |b|, floor): relative error with an absolute floor for
/// entries that are zero in exact arithmetic.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-6) {
  double m = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) m = std::max(m, rel_err(a(i, j), b(i, j), floor));
  return m;
}

namespace detail {

/// Glorot weights plus nonzero biases, so bias paths are exercised too.
inline ScalarNetwork probe_net(std::vector<int> widths, Activation act, std::uint64_t seed) {
  ScalarNetwork net = make_network({std::move(widths), act}, seed);
  Eigen::VectorXd w = net.weights();
  std::mt19937_64 rng(seed + 7);
  std::normal_distribution<double> n(0.0, 0.3);
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] == 0.0) w[i] = n(rng);
  net.set_weights(w);
  return net;
}

inline Eigen::VectorXd uniform_vector(std::mt19937_64& rng, int d, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd x(d);
  for (int i = 0; i < d; ++i) x[i] = u(rng);
  return x;
}

inline CheckResult verdict(std::string name, double worst, double tol, int cases) {
  std::ostringstream os;
  os << "worst " << worst << " (tolerance " << tol << ", " << cases << " cases)";
  return {std::move(name), worst < tol, os.str()};
}

inline Activation alternate(int i) { return i % 2 ? Activation::kTanh : Activation::kSoftplus; }

}  // namespace detail

inline CheckResult check_grad_x(int nets = 10, double tol = 1e-5) {
  std::mt19937_64 rng(17);
  double worst = 0;
  for (int i = 0; i < nets; ++i) {
    const auto net = detail::probe_net({2, 8, 8, 1}, detail::alternate(i), 100 + i);
    const auto x = detail::uniform_vector(rng, 2, 2.0);
    const auto fd = fd_gradient([&](const Eigen::VectorXd& y) { return forward(net, y); }, x);
    worst = std::max(worst, max_rel_err(grad_x(net, x), fd, 1e-4));
  }
  return detail::verdict("grad_x vs finite differences", worst, tol, nets);
}

inline CheckResult check_hess_x(int nets = 10, double tol = 1e-4) {
  std::mt19937_64 rng(23);
  double worst = 0;
  bool symmetric = true;
  for (int i = 0; i < nets; ++i) {
    const auto net = detail::probe_net({4, 8, 8, 1}, detail::alternate(i), 200 + i);
    const auto x = detail::uniform_vector(rng, 4, 2.0);
    const Eigen::MatrixXd H = hess_x(net, x);
    symmetric = symmetric && H == H.transpose();
    const auto fd = fd_hessian([&](const Eigen::VectorXd& y) { return forward(net, y); }, x);
    worst = std::max(worst, max_rel_err(H, fd, 1e-3));
  }
  auto out = detail::verdict("hess_x vs finite differences", worst, tol, nets);
  if (!symmetric) {
    out.passed = false;
    out.detail += ", not symmetric";
  }
  return out;
}

inline CheckResult check_grad_w(int nets = 10, double tol = 1e-5) {
  std::mt19937_64 rng(29);
  double worst = 0;
  for (int i = 0; i < nets; ++i) {
    const auto net = detail::probe_net({2, 8, 8, 1}, detail::alternate(i), 300 + i);
    const auto x = detail::uniform_vector(rng, 2, 2.0);
    const auto fd = fd_gradient(
        [&](const Eigen::VectorXd& w) { return forward(ScalarNetwork(net.arch(), w), x); },
        net.weights());
    worst = std::max(worst, max_rel_err(grad_w(net, x), fd, 1e-4));
  }
  return detail::verdict("grad_w vs finite differences", worst, tol, nets);
}

/// d qddot / d w against finite differences over all weights. Entries are
/// compared relative to the largest FD entry's magnitude times 1e-3.
inline CheckResult check_accel_jacobian(int nets = 10, double tol = 1e-3) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  double worst = 0;
  for (int i = 0; i < nets; ++i) {
    const auto net = detail::probe_net({2, 8, 1}, Activation::kSoftplus, 50 + i);
    const auto s = GeneralizedState::scalar(u(rng), u(rng));
    const auto f = Force::scalar(u(rng));
    const auto fd = fd_jacobian(
        [&](const Eigen::VectorXd& w) { return accel(ScalarNetwork(net.arch(), w), s, f); },
        net.weights(), 1e-5);
    worst = std::max(worst, max_rel_err(accel_jac_weights(net, s, f), fd, 1e-3 * fd.cwiseAbs().maxCoeff()));
  }
  return detail::verdict("accel weight Jacobian vs finite differences", worst, tol, nets);
}

/// Euler-Lagrange operator on the point-pendulum Lagrangian against
/// qddot = (a + m g l sin q) / (m l^2), on a 5 x 5 x 4 grid. Without damping
/// the error must be below `tol` absolutely. The default damping eps scales
/// qddot by m l^2 / (m l^2 + eps), so there the bound is relative.
inline CheckResult check_analytic_lagrangian(double tol = 1e-6) {
  const double m = 1.0, l = 1.0, g = 10.0;
  const auto L = point_pendulum_lagrangian(m, l, g);
  AccelOptions undamped;
  undamped.damping = 0.0;
  double worst_abs = 0, worst_rel = 0;
  int points = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 4; ++k) {
        const double q = -3.0 + 1.5 * i, v = -6.0 + 3.0 * j, a = -2.0 + 4.0 / 3.0 * k;
        const auto s = GeneralizedState::scalar(q, v);
        const double expected = (a + m * g * l * std::sin(q)) / (m * l * l);
        worst_abs = std::max(worst_abs, std::abs(accel(L, s, Force::scalar(a), undamped)[0] - expected));
        const double damped = accel(L, s, Force::scalar(a))[0];
        worst_rel = std::max(worst_rel, std::abs(damped - expected) / std::max(1.0, std::abs(expected)));
        ++points;
      }
  std::ostringstream os;
  os << "undamped worst absolute " << worst_abs << ", damped worst relative " << worst_rel << " (tolerance "
     << tol << ", " << points << " points)";
  return {"Euler-Lagrange operator vs closed-form pendulum", worst_abs < tol && worst_rel <= tol, os.str()};
}

/// Constant-acceleration exactness plus the empirical global order on
/// qddot = -q over one period (100 vs 200 steps).
inline CheckResult check_rk_order(const RKCoefficients& coeffs) {
  double exact_err = 0;
  for (double g : {-9.81, 0.5, 2.0})
    for (double dt : {0.01, 0.1, 0.37}) {
      const auto s = rk2_step(
          [g](const GeneralizedState& st, const Force&) { return Eigen::VectorXd::Constant(st.q.size(), g).eval(); },
          GeneralizedState::scalar(0.4, -0.7), Force::zero(1), {dt, coeffs});
      exact_err = std::max({exact_err, std::abs(s.q[0] - (0.4 - 0.7 * dt + 0.5 * g * dt * dt)),
                            std::abs(s.qdot[0] - (-0.7 + g * dt))});
    }
  auto period_error = [&coeffs](int steps) {
    const double T = 2.0 * std::numbers::pi;
    auto s = GeneralizedState::scalar(1.0, 0.0);
    for (int i = 0; i < steps; ++i)
      s = rk2_step([](const GeneralizedState& st, const Force&) { return (-st.q).eval(); }, s,
                   Force::zero(1), {T / steps, coeffs});
    return std::hypot(s.q[0] - 1.0, s.qdot[0]);
  };
  const double order = std::log2(period_error(100) / period_error(200));
  std::ostringstream os;
  os << "constant-acceleration error " << exact_err << ", empirical order " << order;
  const bool ok = exact_err <= 1e-12 && order >= 1.9 && order <= 2.1;
  return {"RK-2 order", ok, os.str()};
}

inline CheckResult check_psd(const Eigen::MatrixXd& P) {
  std::ostringstream os;
  os << P.rows() << "x" << P.cols();
  if (P.rows() == P.cols() && P.size() > 0)
    os << ", asymmetry " << (P - P.transpose()).cwiseAbs().maxCoeff();
  return {"covariance symmetric PSD", covariance_is_psd(P), os.str()};
}

struct KfComparison {
  double mean_err = 0;
  double cov_err = 0;
  Eigen::MatrixXd final_cov;
};

/// Runs `steps` predict/update pairs on a linear-Gaussian weight model
/// y = A w + noise and compares against a filter written with explicit
/// inverses and the Joseph-form covariance update.
inline KfComparison compare_with_reference_kf(int steps, int dim, int obs_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd truth(dim);
  for (int i = 0; i < dim; ++i) truth[i] = n(rng);
  const double p0 = 2.0, q = 1e-3, r = 0.3;
  auto b = GaussianWeightBelief::isotropic(Eigen::VectorXd::Zero(dim), p0, q, r, obs_dim);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd P = p0 * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::MatrixXd Q = q * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dim, dim);
  KfComparison out;
  for (int k = 0; k < steps; ++k) {
    Eigen::MatrixXd A(obs_dim, dim);
    for (int i = 0; i < obs_dim; ++i)
      for (int j = 0; j < dim; ++j) A(i, j) = n(rng);
    Eigen::VectorXd y = A * truth;
    for (int i = 0; i < obs_dim; ++i) y[i] += 0.5 * n(rng);
    ekf_predict_inplace(b);
    ekf_update_inplace(b, A, y, A * b.mean);

    P = P + Q;
    const Eigen::MatrixXd S = A * P * A.transpose() + b.meas_noise;
    const Eigen::MatrixXd K = P * A.transpose() * S.inverse();
    x = x + K * (y - A * x);
    P = (I - K * A) * P * (I - K * A).transpose() + K * b.meas_noise * K.transpose();

    out.mean_err = std::max(out.mean_err, (b.mean - x).cwiseAbs().maxCoeff());
    out.cov_err = std::max(out.cov_err, (b.cov - P).cwiseAbs().maxCoeff());
  }
  out.final_cov = b.cov;
  return out;
}

inline CheckResult check_kf_equivalence(int steps = 50, double tol = 1e-8) {
  double worst = 0;
  for (int obs_dim : {1, 3}) {
    const auto cmp = compare_with_reference_kf(steps, 6, obs_dim, 17 + obs_dim);
    worst = std::max({worst, cmp.mean_err, cmp.cov_err});
  }
  return detail::verdict("EKF vs closed-form Kalman filter", worst, tol, 2 * steps);
}

/// Every check with its default settings, in a fixed order.
inline std::vector<CheckResult> run_all() {
  std::vector<CheckResult> out;
  out.push_back(check_grad_x());
  out.push_back(check_hess_x());
  out.push_back(check_grad_w());
  out.push_back(check_accel_jacobian());
  out.push_back(check_analytic_lagrangian());
  out.push_back(check_rk_order(RKCoefficients{}));
  out.push_back(check_kf_equivalence());
  auto psd = check_psd(compare_with_reference_kf(50, 6, 3, 20).final_cov);
  psd.name = "EKF posterior covariance symmetric PSD";
  out.push_back(psd);
  return out;
}

}  // namespace lagdyna::checks

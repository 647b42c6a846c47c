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

// Scalar-output feed-forward networks with exact input derivatives (first and
// second order) and exact weight gradients, including weight gradients of
// first and second directional input derivatives.
//
// Flat weight layout: layer-major; within a layer the weight matrix comes
// first (row-major, rows = output units) followed by the bias vector.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lagdyna/errors.hpp"

namespace lagdyna {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation : std::uint32_t {
  kSoftplus = 0,
  kTanh = 1,
  kLinear = 2,
};

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kSoftplus:
      return "softplus";
    case Activation::kTanh:
      return "tanh";
    case Activation::kLinear:
      return "linear";
  }
  return "unknown";
}

inline Activation activation_from_string(const std::string& name) {
  if (name == "softplus") return Activation::kSoftplus;
  if (name == "tanh") return Activation::kTanh;
  if (name == "linear") return Activation::kLinear;
  throw DomainError("unknown activation '" + name + "'");
}

/// Value and first three derivatives of an activation at one point.
struct ActivationJet {
  double v, d1, d2, d3;
};

inline ActivationJet activation_jet(Activation a, double z) {
  switch (a) {
    case Activation::kSoftplus: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      const double v = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
      const double d2 = s * (1.0 - s);
      return {v, s, d2, d2 * (1.0 - 2.0 * s)};
    }
    case Activation::kTanh: {
      const double t = std::tanh(z);
      const double g = 1.0 - t * t;
      return {t, g, -2.0 * t * g, g * (6.0 * t * t - 2.0)};
    }
    case Activation::kLinear:
      return {z, 1.0, 0.0, 0.0};
  }
  return {0, 0, 0, 0};
}

struct NetworkArch {
  /// widths.front() is the input dimension, widths.back() must be 1.
  std::vector<int> widths;
  Activation activation = Activation::kSoftplus;

  int input_dim() const { return widths.front(); }
  int num_layers() const { return static_cast<int>(widths.size()) - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      n += static_cast<std::size_t>(widths[l + 1]) * (widths[l] + 1);
    return n;
  }

  void validate() const {
    if (widths.size() < 2) throw ShapeError("network needs at least one layer");
    for (int w : widths)
      if (w <= 0) throw ShapeError("layer widths must be positive");
    if (widths.back() != 1) throw ShapeError("output width must be 1");
  }

  bool operator==(const NetworkArch&) const = default;
};

/// f_w : R^d -> R. Value type; copying copies the weights.
class ScalarNetwork {
 public:
  ScalarNetwork() = default;
  ScalarNetwork(NetworkArch arch, Eigen::VectorXd weights)
      : arch_(std::move(arch)), weights_(std::move(weights)) {
    arch_.validate();
    if (static_cast<std::size_t>(weights_.size()) != arch_.param_count())
      throw ShapeError("weight vector length " +
                       std::to_string(weights_.size()) + " != parameter count " +
                       std::to_string(arch_.param_count()));
    if (!weights_.allFinite()) throw DomainError("non-finite network weight");
  }

  const NetworkArch& arch() const { return arch_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  int input_dim() const { return arch_.input_dim(); }
  std::size_t param_count() const { return arch_.param_count(); }

  /// Replace the whole weight vector (the only mutation trainers perform).
  void set_weights(Eigen::VectorXd w) {
    if (w.size() != weights_.size()) throw ShapeError("weight vector length mismatch");
    if (!w.allFinite()) throw DomainError("non-finite network weight");
    weights_ = std::move(w);
  }

  Eigen::Map<const RowMajorMatrix> weight(int layer) const {
    return {weights_.data() + offset(layer), arch_.widths[layer + 1],
            arch_.widths[layer]};
  }
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const {
    return {weights_.data() + offset(layer) +
                static_cast<std::ptrdiff_t>(arch_.widths[layer + 1]) *
                    arch_.widths[layer],
            arch_.widths[layer + 1]};
  }

  /// Start of layer `layer`'s block inside the flat weight vector.
  std::ptrdiff_t offset(int layer) const {
    std::ptrdiff_t off = 0;
    for (int l = 0; l < layer; ++l)
      off += static_cast<std::ptrdiff_t>(arch_.widths[l + 1]) * (arch_.widths[l] + 1);
    return off;
  }

  // LagrangianModel interface.
  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const;

 private:
  NetworkArch arch_;
  Eigen::VectorXd weights_;
};

namespace detail {

inline void check_input(const ScalarNetwork& net, const Eigen::VectorXd& x) {
  if (x.size() != net.input_dim())
    throw ShapeError("input has length " + std::to_string(x.size()) +
                     ", network expects " + std::to_string(net.input_dim()));
  if (!x.allFinite()) throw DomainError("non-finite network input");
}

inline void add_weight_grad(const ScalarNetwork& net, int layer,
                            const Eigen::VectorXd& dz, const Eigen::VectorXd& h,
                            Eigen::VectorXd& grad, bool with_bias) {
  const int out = net.arch().widths[layer + 1];
  const int in = net.arch().widths[layer];
  Eigen::Map<RowMajorMatrix> gw(grad.data() + net.offset(layer), out, in);
  gw.noalias() += dz * h.transpose();
  if (with_bias) grad.segment(net.offset(layer) + static_cast<std::ptrdiff_t>(out) * in, out) += dz;
}

/// Applies the activation to every entry of `z` in place and, when `slope`
/// is non-null, stores the first derivative alongside.
inline void activate_inplace(Activation a, Eigen::MatrixXd& z, Eigen::MatrixXd* slope) {
  switch (a) {
    case Activation::kTanh:
      // 1 - 2 / (exp(2z) + 1) uses the vectorized exp; accurate to a few ulp
      // and saturates cleanly at both ends.
      z = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
      if (slope) *slope = 1.0 - z.array().square();
      return;
    case Activation::kSoftplus: {
      const Eigen::ArrayXXd e = (-z.array().abs()).exp();
      if (slope)
        *slope = (z.array() >= 0).select(1.0 / (1.0 + e), e / (1.0 + e));
      z = z.array().max(0.0) + e.log1p();
      return;
    }
    case Activation::kLinear:
      if (slope) *slope = Eigen::MatrixXd::Ones(z.rows(), z.cols());
      return;
  }
}

}  // namespace detail

inline double forward(const ScalarNetwork& net, const Eigen::VectorXd& x) {
  detail::check_input(net, x);
  Eigen::VectorXd h = x;
  const int L = net.arch().num_layers();
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXd z = net.weight(l) * h + net.bias(l);
    if (l + 1 < L)
      for (Eigen::Index i = 0; i < z.size(); ++i)
        z[i] = activation_jet(net.arch().activation, z[i]).v;
    h = std::move(z);
  }
  return h[0];
}

/// Evaluates the network on every column of `x` (input_dim x batch).
inline Eigen::VectorXd forward_batch(const ScalarNetwork& net, const Eigen::MatrixXd& x) {
  if (x.rows() != net.input_dim()) throw ShapeError("batch input has wrong row count");
  Eigen::MatrixXd h = x;
  const int L = net.arch().num_layers();
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd z = net.weight(l) * h;
    z.colwise() += net.bias(l);
    if (l + 1 < L) detail::activate_inplace(net.arch().activation, z, nullptr);
    h = std::move(z);
  }
  return h.row(0).transpose();
}

/// Exact gradient of f with respect to the input.
inline Eigen::VectorXd grad_x(const ScalarNetwork& net, const Eigen::VectorXd& x) {
  detail::check_input(net, x);
  const int L = net.arch().num_layers();
  std::vector<Eigen::VectorXd> slope(L);
  Eigen::VectorXd h = x;
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXd z = net.weight(l) * h + net.bias(l);
    if (l + 1 < L) {
      slope[l].resize(z.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const auto j = activation_jet(net.arch().activation, z[i]);
        z[i] = j.v;
        slope[l][i] = j.d1;
      }
    }
    h = std::move(z);
  }
  Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
  for (int l = L - 1; l >= 0; --l) {
    Eigen::VectorXd back = net.weight(l).transpose() * delta;
    if (l > 0) back.array() *= slope[l - 1].array();
    delta = std::move(back);
  }
  return delta;
}

/// Exact Hessian of f with respect to the input, symmetrized as (H + H^T)/2.
inline Eigen::MatrixXd hess_x(const ScalarNetwork& net, const Eigen::VectorXd& x) {
  detail::check_input(net, x);
  const int d = net.input_dim();
  const int L = net.arch().num_layers();
  // h: unit values, jac: d(h)/dx (units x d), hes: d2(h)/dx2 flattened (units x d*d).
  Eigen::VectorXd h = x;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd hes = Eigen::MatrixXd::Zero(d, d * d);
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXd z = net.weight(l) * h + net.bias(l);
    Eigen::MatrixXd jz = net.weight(l) * jac;
    Eigen::MatrixXd hz = net.weight(l) * hes;
    if (l + 1 < L) {
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const auto j = activation_jet(net.arch().activation, z[i]);
        z[i] = j.v;
        Eigen::RowVectorXd row = jz.row(i);
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b)
            hz(i, a * d + b) = j.d2 * row[a] * row[b] + j.d1 * hz(i, a * d + b);
        jz.row(i) *= j.d1;
      }
    }
    h = std::move(z);
    jac = std::move(jz);
    hes = std::move(hz);
  }
  Eigen::MatrixXd H(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) H(a, b) = hes(0, a * d + b);
  return 0.5 * (H + H.transpose());
}

/// Exact gradient of f(x) with respect to the flat weight vector.
inline Eigen::VectorXd grad_w(const ScalarNetwork& net, const Eigen::VectorXd& x) {
  detail::check_input(net, x);
  const int L = net.arch().num_layers();
  std::vector<Eigen::VectorXd> inputs(L), slope(L);
  Eigen::VectorXd h = x;
  for (int l = 0; l < L; ++l) {
    inputs[l] = h;
    Eigen::VectorXd z = net.weight(l) * h + net.bias(l);
    if (l + 1 < L) {
      slope[l].resize(z.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const auto j = activation_jet(net.arch().activation, z[i]);
        z[i] = j.v;
        slope[l][i] = j.d1;
      }
    }
    h = std::move(z);
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
  Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
  for (int l = L - 1; l >= 0; --l) {
    detail::add_weight_grad(net, l, delta, inputs[l], grad, true);
    if (l > 0) {
      Eigen::VectorXd back = net.weight(l).transpose() * delta;
      back.array() *= slope[l - 1].array();
      delta = std::move(back);
    }
  }
  return grad;
}

/// Batched value and weight gradient: returns sum_b adjoint[b] * d f(x_b)/dw
/// and writes f(x_b) into `values` when non-null.
inline Eigen::VectorXd grad_w_batch(const ScalarNetwork& net, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& adjoint,
                                    Eigen::VectorXd* values = nullptr) {
  if (x.rows() != net.input_dim()) throw ShapeError("batch input has wrong row count");
  if (adjoint.size() != x.cols()) throw ShapeError("adjoint length != batch size");
  const int L = net.arch().num_layers();
  const auto act = net.arch().activation;
  std::vector<Eigen::MatrixXd> inputs(L), slope(L);
  Eigen::MatrixXd h = x;
  for (int l = 0; l < L; ++l) {
    inputs[l] = h;
    Eigen::MatrixXd z = net.weight(l) * h;
    z.colwise() += net.bias(l);
    if (l + 1 < L) detail::activate_inplace(act, z, &slope[l]);
    h = std::move(z);
  }
  if (values) *values = h.row(0).transpose();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
  Eigen::MatrixXd delta = adjoint.transpose();
  for (int l = L - 1; l >= 0; --l) {
    const int out = net.arch().widths[l + 1];
    const int in = net.arch().widths[l];
    Eigen::Map<RowMajorMatrix> gw(grad.data() + net.offset(l), out, in);
    gw.noalias() += delta * inputs[l].transpose();
    grad.segment(net.offset(l) + static_cast<std::ptrdiff_t>(out) * in, out) +=
        delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = net.weight(l).transpose() * delta;
      back.array() *= slope[l - 1].array();
      delta = std::move(back);
    }
  }
  return grad;
}

/// Coefficients of the scalar c0 f + cu Df[u] + cw Df[w] + cuw D2f[u,w].
struct JetCoefficients {
  double c0 = 0, cu = 0, cw = 0, cuw = 0;
};

/// Directional derivatives at x together with the weight gradient of their
/// weighted combination.
struct JetResult {
  double value = 0;  ///< f(x)
  double du = 0;     ///< Df(x)[u]
  double dw = 0;     ///< Df(x)[w]
  double duw = 0;    ///< D2f(x)[u, w]
  Eigen::VectorXd grad_w;
};

/// Hyper-dual forward pass along directions u and w followed by a reverse
/// sweep over the weights. This is what turns derivatives of the Lagrangian
/// (momenta, Hessian blocks) into something the optimizers can differentiate.
inline JetResult directional_grad_w(const ScalarNetwork& net, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                                    const JetCoefficients& c) {
  detail::check_input(net, x);
  if (u.size() != x.size() || w.size() != x.size())
    throw ShapeError("direction length != input length");
  const int L = net.arch().num_layers();
  const auto act = net.arch().activation;
  // Per layer: inputs (units x 4: value, u, w, uw) and pre-activations.
  std::vector<Eigen::MatrixXd> in(L), pre(L);
  Eigen::MatrixXd h(x.size(), 4);
  h.col(0) = x;
  h.col(1) = u;
  h.col(2) = w;
  h.col(3).setZero();
  for (int l = 0; l < L; ++l) {
    in[l] = h;
    Eigen::MatrixXd z = net.weight(l) * h;
    z.col(0) += net.bias(l);
    pre[l] = z;
    if (l + 1 < L) {
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const auto j = activation_jet(act, pre[l](i, 0));
        const double zu = pre[l](i, 1), zw = pre[l](i, 2), zuw = pre[l](i, 3);
        z(i, 0) = j.v;
        z(i, 1) = j.d1 * zu;
        z(i, 2) = j.d1 * zw;
        z(i, 3) = j.d2 * zu * zw + j.d1 * zuw;
      }
    }
    h = std::move(z);
  }
  JetResult r;
  r.value = h(0, 0);
  r.du = h(0, 1);
  r.dw = h(0, 2);
  r.duw = h(0, 3);
  r.grad_w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));

  Eigen::MatrixXd zbar(1, 4);
  zbar << c.c0, c.cu, c.cw, c.cuw;
  for (int l = L - 1; l >= 0; --l) {
    const int out = net.arch().widths[l + 1];
    const int inw = net.arch().widths[l];
    Eigen::Map<RowMajorMatrix> gw(r.grad_w.data() + net.offset(l), out, inw);
    gw.noalias() += zbar * in[l].transpose();
    r.grad_w.segment(net.offset(l) + static_cast<std::ptrdiff_t>(out) * inw, out) +=
        zbar.col(0);
    if (l == 0) break;
    Eigen::MatrixXd hbar = net.weight(l).transpose() * zbar;
    const Eigen::MatrixXd& z = pre[l - 1];
    Eigen::MatrixXd next(hbar.rows(), 4);
    for (Eigen::Index i = 0; i < hbar.rows(); ++i) {
      const auto j = activation_jet(act, z(i, 0));
      const double zu = z(i, 1), zw = z(i, 2), zuw = z(i, 3);
      const double b0 = hbar(i, 0), bu = hbar(i, 1), bw = hbar(i, 2), buw = hbar(i, 3);
      next(i, 0) = b0 * j.d1 + bu * j.d2 * zu + bw * j.d2 * zw +
                   buw * (j.d3 * zu * zw + j.d2 * zuw);
      next(i, 1) = bu * j.d1 + buw * j.d2 * zw;
      next(i, 2) = bw * j.d1 + buw * j.d2 * zu;
      next(i, 3) = buw * j.d1;
    }
    zbar = std::move(next);
  }
  return r;
}

inline double ScalarNetwork::value(const Eigen::VectorXd& x) const { return forward(*this, x); }
inline Eigen::VectorXd ScalarNetwork::gradient(const Eigen::VectorXd& x) const {
  return grad_x(*this, x);
}
inline Eigen::MatrixXd ScalarNetwork::hessian(const Eigen::VectorXd& x) const {
  return hess_x(*this, x);
}

/// Glorot-uniform weights, zero biases.
inline ScalarNetwork make_network(const NetworkArch& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.param_count()));
  std::ptrdiff_t off = 0;
  for (int l = 0; l < arch.num_layers(); ++l) {
    const int in = arch.widths[l], out = arch.widths[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(in) * out; ++k)
      w[off + k] = dist(rng);
    off += static_cast<std::ptrdiff_t>(in + 1) * out;
  }
  return ScalarNetwork(arch, std::move(w));
}

}  // namespace lagdyna

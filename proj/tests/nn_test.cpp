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

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lagdyna/checkpoint.hpp"
#include "lagdyna/nn.hpp"
#include "oracles.hpp"

namespace lagdyna {
namespace {

using testing::fd_gradient;
using testing::fd_hessian;
using testing::max_rel_err;

ScalarNetwork affine(double w0, double w1, double b) {
  Eigen::VectorXd w(3);
  w << w0, w1, b;
  return ScalarNetwork({{2, 1}, Activation::kSoftplus}, w);
}

Eigen::VectorXd random_input(std::mt19937_64& rng, int d, double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd x(d);
  for (int i = 0; i < d; ++i) x[i] = u(rng);
  return x;
}

ScalarNetwork random_net(std::vector<int> widths, Activation act, std::uint64_t seed) {
  // Glorot weights plus nonzero biases so every code path is exercised.
  ScalarNetwork net = make_network({std::move(widths), act}, seed);
  Eigen::VectorXd w = net.weights();
  std::mt19937_64 rng(seed + 7);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int l = 0; l < net.arch().num_layers(); ++l) {
    const auto off = net.offset(l) + static_cast<std::ptrdiff_t>(net.arch().widths[l]) *
                                         net.arch().widths[l + 1];
    for (int i = 0; i < net.arch().widths[l + 1]; ++i) w[off + i] = n(rng);
  }
  net.set_weights(w);
  return net;
}

TEST(NetworkArchTest, ParamCountAndValidation) {
  NetworkArch arch{{2, 32, 32, 1}, Activation::kSoftplus};
  EXPECT_EQ(arch.param_count(), 2u * 32 + 32 + 32 * 32 + 32 + 32 + 1);
  EXPECT_THROW((NetworkArch{{2, 3}, Activation::kTanh}.validate()), ShapeError);
  EXPECT_THROW((NetworkArch{{2}, Activation::kTanh}.validate()), ShapeError);
  EXPECT_THROW((ScalarNetwork({{2, 1}, Activation::kTanh}, Eigen::VectorXd::Zero(2))), ShapeError);
}

TEST(ForwardTest, AffineLayer) {
  Eigen::VectorXd x(2);
  x << 1, 1;
  EXPECT_DOUBLE_EQ(forward(affine(1, 2, 0.5), x), 3.5);
}

TEST(ForwardTest, ZeroWeightsGiveZero) {
  ScalarNetwork net({{2, 4, 1}, Activation::kLinear}, Eigen::VectorXd::Zero(17));
  std::mt19937_64 rng(1);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(forward(net, random_input(rng, 2)), 0.0);
}

TEST(ForwardTest, MatchesNaiveReevaluation) {
  std::mt19937_64 rng(3);
  for (int act : {0, 1}) {
    auto net = random_net({2, 8, 1}, static_cast<Activation>(act), 11 + act);
    for (int k = 0; k < 20; ++k) {
      const auto x = random_input(rng, 2);
      const double ref = testing::naive_forward(net.arch().widths, act, net.weights(), x);
      EXPECT_NEAR(forward(net, x), ref, 1e-12 * (1 + std::abs(ref)));
    }
  }
}

TEST(ForwardTest, BatchMatchesSingle) {
  auto net = random_net({2, 8, 8, 1}, Activation::kTanh, 5);
  std::mt19937_64 rng(9);
  Eigen::MatrixXd X(2, 6);
  for (int c = 0; c < 6; ++c) X.col(c) = random_input(rng, 2);
  const Eigen::VectorXd v = forward_batch(net, X);
  for (int c = 0; c < 6; ++c) EXPECT_NEAR(v[c], forward(net, X.col(c)), 1e-12);
}

TEST(ForwardTest, ErrorsOnBadInput) {
  auto net = affine(1, 2, 0);
  EXPECT_THROW(forward(net, Eigen::VectorXd::Zero(3)), ShapeError);
  Eigen::VectorXd x(2);
  x << 1, NAN;
  EXPECT_THROW(forward(net, x), DomainError);
  EXPECT_THROW(grad_x(net, x), DomainError);
  EXPECT_THROW(hess_x(net, x), DomainError);
}

TEST(GradXTest, AffineGradient) {
  std::mt19937_64 rng(2);
  const auto g = grad_x(affine(1, 2, 0.5), random_input(rng, 2));
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[1], 2.0);
}

TEST(GradXTest, ConstantNetworkHasZeroGradient) {
  auto net = random_net({2, 8, 1}, Activation::kSoftplus, 4);
  Eigen::VectorXd w = net.weights();
  w.segment(net.offset(1), 8).setZero();  // outgoing weights
  net.set_weights(w);
  std::mt19937_64 rng(2);
  EXPECT_EQ(grad_x(net, random_input(rng, 2)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradXTest, MatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  for (int seed = 0; seed < 10; ++seed) {
    auto net = random_net({2, 8, 8, 1}, seed % 2 ? Activation::kTanh : Activation::kSoftplus, 100 + seed);
    const auto x = random_input(rng, 2);
    const auto fd = fd_gradient([&](const Eigen::VectorXd& y) { return forward(net, y); }, x);
    EXPECT_LT(max_rel_err(grad_x(net, x), fd, 1e-4), 1e-5) << "seed " << seed;
  }
}

TEST(HessXTest, LinearNetworkHasZeroHessian) {
  auto net = random_net({2, 6, 1}, Activation::kLinear, 8);
  std::mt19937_64 rng(2);
  EXPECT_EQ(hess_x(net, random_input(rng, 2)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(hess_x(affine(3, 4, 1), random_input(rng, 2)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(HessXTest, MatchesFiniteDifferencesAndIsSymmetric) {
  std::mt19937_64 rng(23);
  for (int seed = 0; seed < 10; ++seed) {
    auto net = random_net({4, 8, 8, 1}, seed % 2 ? Activation::kTanh : Activation::kSoftplus, 200 + seed);
    const auto x = random_input(rng, 4);
    const Eigen::MatrixXd H = hess_x(net, x);
    const auto fd = fd_hessian([&](const Eigen::VectorXd& y) { return forward(net, y); }, x);
    EXPECT_LT(max_rel_err(H, fd, 1e-3), 1e-4) << "seed " << seed;
    EXPECT_EQ((H - H.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(GradWTest, AffineLayerWeightGradient) {
  Eigen::VectorXd x(2);
  x << 0.3, -1.7;
  const auto g = grad_w(affine(1, 2, 0.5), x);
  EXPECT_EQ(g[0], 0.3);
  EXPECT_EQ(g[1], -1.7);
  EXPECT_EQ(g[2], 1.0);
}

TEST(GradWTest, MatchesFiniteDifferences) {
  std::mt19937_64 rng(29);
  for (int seed = 0; seed < 10; ++seed) {
    auto net = random_net({2, 8, 8, 1}, seed % 2 ? Activation::kTanh : Activation::kSoftplus, 300 + seed);
    const auto x = random_input(rng, 2);
    const auto fd = fd_gradient(
        [&](const Eigen::VectorXd& w) { return forward(ScalarNetwork(net.arch(), w), x); },
        net.weights());
    EXPECT_LT(max_rel_err(grad_w(net, x), fd, 1e-4), 1e-5) << "seed " << seed;
  }
}

TEST(GradWTest, DuplicateHiddenUnitsGetIdenticalGradients) {
  // 2 -> 3 -> 1 with units 0 and 1 identical in and out.
  Eigen::VectorXd w(13);
  w << 0.4, -0.2, 0.4, -0.2, 0.9, 0.1,  // W0 rows
      0.05, 0.05, -0.3,                   // b0
      0.7, 0.7, -1.1,                     // W1
      0.2;                                // b1
  ScalarNetwork net({{2, 3, 1}, Activation::kSoftplus}, w);
  Eigen::VectorXd x(2);
  x << 0.8, -0.6;
  const auto g = grad_w(net, x);
  EXPECT_EQ(g.segment(0, 2), g.segment(2, 2));
  EXPECT_EQ(g[6], g[7]);
  EXPECT_EQ(g[9], g[10]);
}

TEST(GradWTest, BatchGradientIsWeightedSum) {
  auto net = random_net({3, 8, 8, 1}, Activation::kTanh, 41);
  std::mt19937_64 rng(5);
  Eigen::MatrixXd X(3, 4);
  Eigen::VectorXd adj(4);
  adj << 0.5, -1.0, 2.0, 0.25;
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(net.param_count());
  for (int c = 0; c < 4; ++c) {
    X.col(c) = random_input(rng, 3);
    expected += adj[c] * grad_w(net, X.col(c));
  }
  Eigen::VectorXd values;
  const auto g = grad_w_batch(net, X, adj, &values);
  EXPECT_LT((g - expected).cwiseAbs().maxCoeff(), 1e-12);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(values[c], forward(net, X.col(c)), 1e-12);
}

TEST(DirectionalGradTest, DirectionalValuesMatchInputDerivatives) {
  auto net = random_net({4, 8, 8, 1}, Activation::kSoftplus, 55);
  std::mt19937_64 rng(6);
  const auto x = random_input(rng, 4), u = random_input(rng, 4), w = random_input(rng, 4);
  const auto jet = directional_grad_w(net, x, u, w, {1, 0, 0, 0});
  const auto g = grad_x(net, x);
  const auto H = hess_x(net, x);
  EXPECT_NEAR(jet.value, forward(net, x), 1e-12);
  EXPECT_NEAR(jet.du, g.dot(u), 1e-10);
  EXPECT_NEAR(jet.dw, g.dot(w), 1e-10);
  EXPECT_NEAR(jet.duw, u.dot(H * w), 1e-10);
}

TEST(DirectionalGradTest, WeightGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(61);
  for (int seed = 0; seed < 10; ++seed) {
    const auto act = seed % 2 ? Activation::kTanh : Activation::kSoftplus;
    auto net = random_net({2, 8, 8, 1}, act, 400 + seed);
    const auto x = random_input(rng, 2), u = random_input(rng, 2), w = random_input(rng, 2);
    const JetCoefficients c{0.3, -1.2, 0.7, 2.0};
    auto scalar = [&](const Eigen::VectorXd& wt) {
      ScalarNetwork n(net.arch(), wt);
      // Input-space finite differences of forward() only.
      const double f0 = forward(n, x);
      const double h = 1e-4;
      const double du = (forward(n, x + h * u) - forward(n, x - h * u)) / (2 * h);
      const double dw = (forward(n, x + h * w) - forward(n, x - h * w)) / (2 * h);
      const double duw = (forward(n, x + h * u + h * w) - forward(n, x + h * u - h * w) -
                          forward(n, x - h * u + h * w) + forward(n, x - h * u - h * w)) /
                         (4 * h * h);
      return c.c0 * f0 + c.cu * du + c.cw * dw + c.cuw * duw;
    };
    // Reference: exact directional derivatives differentiated over weights.
    auto exact_scalar = [&](const Eigen::VectorXd& wt) {
      const auto j = directional_grad_w(ScalarNetwork(net.arch(), wt), x, u, w, c);
      return c.c0 * j.value + c.cu * j.du + c.cw * j.dw + c.cuw * j.duw;
    };
    EXPECT_NEAR(exact_scalar(net.weights()), scalar(net.weights()), 1e-5);
    const auto fd = fd_gradient(exact_scalar, net.weights());
    const auto got = directional_grad_w(net, x, u, w, c).grad_w;
    EXPECT_LT(max_rel_err(got, fd, 1e-4), 1e-5) << "seed " << seed;
  }
}

TEST(PurityTest, RepeatedCallsAreBitIdentical) {
  auto net = random_net({2, 16, 16, 1}, Activation::kSoftplus, 77);
  std::mt19937_64 rng(8);
  const auto x = random_input(rng, 2);
  EXPECT_EQ(forward(net, x), forward(net, x));
  EXPECT_EQ(grad_x(net, x), grad_x(net, x));
  EXPECT_EQ(hess_x(net, x), hess_x(net, x));
  EXPECT_EQ(grad_w(net, x), grad_w(net, x));
}

TEST(InitTest, GlorotBoundsAndZeroBiases) {
  auto net = make_network({{2, 32, 32, 1}, Activation::kSoftplus}, 123);
  for (int l = 0; l < net.arch().num_layers(); ++l) {
    const int in = net.arch().widths[l], out = net.arch().widths[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    EXPECT_LE(net.weight(l).cwiseAbs().maxCoeff(), limit);
    EXPECT_EQ(net.bias(l).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(make_network(net.arch(), 123).weights(), net.weights());
  EXPECT_NE(make_network(net.arch(), 124).weights(), net.weights());
}

TEST(CheckpointTest, RoundTripPreservesBits) {
  Checkpoint ck{CheckpointRole::kPolicy, random_net({2, 5, 1}, Activation::kTanh, 9), {-0.5}};
  std::stringstream ss;
  write_checkpoint(ss, ck);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "LNN1");
  // magic + role + activation + count + 3 widths + 21 weights + extras count + 1 extra
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 3 * 4 + 21 * 8 + 4 + 8);
  const auto back = read_checkpoint(ss);
  EXPECT_EQ(back.role, CheckpointRole::kPolicy);
  EXPECT_EQ(back.net.arch(), ck.net.arch());
  EXPECT_EQ(back.net.weights(), ck.net.weights());
  EXPECT_EQ(back.extras, ck.extras);
}

TEST(CheckpointTest, RejectsBadMagicAndTruncation) {
  std::stringstream bad("XXXX");
  EXPECT_THROW(read_checkpoint(bad), DomainError);
  Checkpoint ck{CheckpointRole::kLagrangian, random_net({2, 3, 1}, Activation::kSoftplus, 1), {}};
  std::stringstream ss;
  write_checkpoint(ss, ck);
  std::stringstream cut(ss.str().substr(0, 30));
  EXPECT_THROW(read_checkpoint(cut), DomainError);
}

}  // namespace
}  // namespace lagdyna

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

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "lagdyna/integrate.hpp"
#include "lagdyna/lnn.hpp"
#include "oracles.hpp"

namespace lagdyna {
namespace {

using testing::fd_gradient;
using testing::fd_jacobian;
using testing::max_rel_err;

ScalarNetwork random_net(std::vector<int> widths, std::uint64_t seed) {
  ScalarNetwork net = make_network({std::move(widths), Activation::kSoftplus}, seed);
  Eigen::VectorXd w = net.weights();
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 0.3);
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] == 0.0) w[i] = n(rng);
  net.set_weights(w);
  return net;
}

// Adds a constant (and optionally scales) an underlying model.
template <class M>
struct Affine {
  const M& base;
  double scale = 1, shift = 0;
  double value(const Eigen::VectorXd& x) const { return scale * base.value(x) + shift; }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return scale * base.gradient(x); }
  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const { return scale * base.hessian(x); }
};

AnalyticLagrangian constant_lagrangian(int dof) {
  return {[](const Eigen::VectorXd&) { return 3.0; },
          [dof](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(2 * dof).eval(); },
          [dof](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2 * dof, 2 * dof).eval(); }};
}

TEST(AccelTest, HarmonicOscillator) {
  const auto L = harmonic_oscillator_lagrangian();
  const auto qdd = accel(L, GeneralizedState::scalar(0.5, 0.0), Force::scalar(0.0));
  EXPECT_NEAR(qdd[0], -0.5, 1e-6);
}

TEST(AccelTest, PendulumAtHorizontal) {
  // Symbolic Euler-Lagrange: qddot = (a + m g l sin q) / (m l^2).
  const auto L = point_pendulum_lagrangian(1, 1, 10);
  const auto qdd = accel(L, GeneralizedState::scalar(std::numbers::pi / 2, 0.0), Force::scalar(0.0));
  EXPECT_NEAR(qdd[0], 10.0, 10.0 * 1e-6);
}

// 100-point (q, qdot, a) grid against the symbolic oracle.
int check_pendulum_grid(double m, double l, double g, const AccelOptions& opt, double tol) {
  const auto L = point_pendulum_lagrangian(m, l, g);
  int points = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 4; ++k) {
        const double q = -3.0 + 1.5 * i, v = -6.0 + 3.0 * j, a = -2.0 + 4.0 / 3.0 * k;
        const double expected = (a + m * g * l * std::sin(q)) / (m * l * l);
        const double got = accel(L, GeneralizedState::scalar(q, v), Force::scalar(a), opt)[0];
        EXPECT_LE(std::abs(got - expected), tol * std::max(1.0, std::abs(expected)))
            << "q=" << q << " v=" << v << " a=" << a;
        ++points;
      }
  return points;
}

TEST(AccelTest, PendulumGridMatchesSymbolicOracle) {
  // Default damping perturbs the result by eps / (m l^2) relative.
  EXPECT_EQ(check_pendulum_grid(1, 1, 10, {}, 1e-6), 100);
}

TEST(AccelTest, UndampedOperatorIsExactForAnyParameters) {
  EXPECT_EQ(check_pendulum_grid(1.3, 0.7, 9.81, {.damping = 0.0}, 1e-12), 100);
}

TEST(AccelTest, ConstantShiftIsExactlyInvisible) {
  auto net = random_net({2, 8, 1}, 3);
  Eigen::VectorXd w = net.weights();
  w[w.size() - 1] += 7.0;  // output bias
  ScalarNetwork shifted(net.arch(), w);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 10; ++k) {
    const auto s = GeneralizedState::scalar(u(rng), u(rng));
    const auto f = Force::scalar(u(rng));
    EXPECT_EQ(accel(net, s, f), accel(shifted, s, f));
    EXPECT_EQ(accel(net, s, f), accel(Affine<ScalarNetwork>{net, 1.0, 7.0}, s, f));
  }
}

TEST(AccelTest, PositiveScaleInvarianceAtZeroForce) {
  const auto L = point_pendulum_lagrangian(1, 1, 10);
  for (double alpha : {0.5, 3.0, 40.0}) {
    const auto s = GeneralizedState::scalar(0.9, -1.3);
    const double base = accel(L, s, Force::scalar(0))[0];
    const double scaled = accel(Affine<AnalyticLagrangian>{L, alpha, 0}, s, Force::scalar(0))[0];
    // Only the Tikhonov term breaks exact invariance.
    EXPECT_NEAR(scaled, base, 1e-5 * std::abs(base));
  }
}

TEST(AccelTest, TwoDofCoupledSystem) {
  // L = 1/2 v^T M v + c^T q with constant M: qddot = M^-1 (a + c).
  Eigen::MatrixXd M(2, 2);
  M << 2.0, 0.5, 0.5, 1.0;
  Eigen::VectorXd c(2);
  c << 0.3, -1.0;
  AnalyticLagrangian L{
      [=](const Eigen::VectorXd& x) { return 0.5 * x.tail(2).dot(M * x.tail(2)) + c.dot(x.head(2)); },
      [=](const Eigen::VectorXd& x) {
        Eigen::VectorXd g(4);
        g << c, M * x.tail(2);
        return g;
      },
      [=](const Eigen::VectorXd&) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(4, 4);
        H.bottomRightCorner(2, 2) = M;
        return H;
      }};
  GeneralizedState s{Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(-0.4, 1.0)};
  Force f{Eigen::Vector2d(1.0, 2.0)};
  const Eigen::VectorXd expected = M.inverse() * (f.a + c);
  EXPECT_LT((accel(L, s, f) - expected).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(AccelTest, SingularVelocityHessianIsReported) {
  // Two dof, velocity Hessian diag(1, -eps) -> singular after damping.
  AnalyticLagrangian L{
      [](const Eigen::VectorXd&) { return 0.0; },
      [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(4).eval(); },
      [](const Eigen::VectorXd&) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(4, 4);
        H(2, 2) = 1.0;
        H(3, 3) = -1e-6;
        return H;
      }};
  GeneralizedState s{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  try {
    accel(L, s, Force::zero(2));
    FAIL() << "expected SingularDynamicsError";
  } catch (const SingularDynamicsError& e) {
    EXPECT_GT(e.condition(), 1e12);
  }
}

TEST(AccelTest, RejectsBadInputs) {
  const auto L = harmonic_oscillator_lagrangian();
  EXPECT_THROW(accel(L, GeneralizedState::scalar(NAN, 0), Force::scalar(0)), DomainError);
  EXPECT_THROW(accel(L, GeneralizedState::scalar(0, 0), Force::zero(2)), ShapeError);
}

TEST(AccelJacobianTest, ZeroOutputLayerStaysFinite) {
  auto net = random_net({2, 8, 1}, 5);
  Eigen::VectorXd w = net.weights();
  w.segment(net.offset(1), 9).setZero();
  net.set_weights(w);
  const auto J = accel_jac_weights(net, GeneralizedState::scalar(0.3, 0.2), Force::scalar(0.5));
  EXPECT_TRUE(J.allFinite());
}

TEST(AccelJacobianTest, MatchesFiniteDifferencesOverWeights) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int seed = 0; seed < 10; ++seed) {
    auto net = random_net({2, 8, 1}, 50 + seed);
    const auto s = GeneralizedState::scalar(u(rng), u(rng));
    const auto f = Force::scalar(u(rng));
    const auto fd = fd_jacobian(
        [&](const Eigen::VectorXd& w) { return accel(ScalarNetwork(net.arch(), w), s, f); },
        net.weights(), 1e-5);
    const auto J = accel_jac_weights(net, s, f);
    EXPECT_LT(max_rel_err(J, fd, 1e-3 * fd.cwiseAbs().maxCoeff()), 1e-3) << "seed " << seed;
  }
}

TEST(AccelJacobianTest, TwoDofMatchesFiniteDifferences) {
  auto net = random_net({4, 8, 8, 1}, 77);
  GeneralizedState s{Eigen::Vector2d(0.3, -0.5), Eigen::Vector2d(0.7, 0.1)};
  Force f{Eigen::Vector2d(0.2, -0.4)};
  const auto fd = fd_jacobian(
      [&](const Eigen::VectorXd& w) { return accel(ScalarNetwork(net.arch(), w), s, f); },
      net.weights(), 1e-6);
  const auto J = accel_jac_weights(net, s, f);
  EXPECT_LT(max_rel_err(J, fd, 1e-3 * fd.cwiseAbs().maxCoeff()), 1e-3);
}

TEST(AccelJacobianTest, TaylorRemainderIsSecondOrder) {
  auto net = random_net({2, 8, 1}, 91);
  const auto s = GeneralizedState::scalar(0.4, -0.8);
  const auto f = Force::scalar(0.3);
  const auto J = accel_jac_weights(net, s, f);
  const double a0 = accel(net, s, f)[0];
  for (int j : {0, 5, 17, 30}) {
    auto remainder = [&](double d) {
      Eigen::VectorXd w = net.weights();
      w[j] += d;
      return std::abs(accel(ScalarNetwork(net.arch(), w), s, f)[0] - a0 - J(0, j) * d);
    };
    const double r1 = remainder(1e-3), r2 = remainder(2e-3);
    // Doubling the perturbation quadruples an O(d^2) remainder.
    EXPECT_NEAR(r2 / r1, 4.0, 0.5) << "weight " << j;
  }
}

std::vector<AccelSample> random_batch(const ScalarNetwork& truth, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<AccelSample> out;
  for (int i = 0; i < n; ++i) {
    AccelSample smp{GeneralizedState::scalar(u(rng), u(rng)), Force::scalar(u(rng)), {}};
    smp.y = accel(truth, smp.s, smp.a) + Eigen::VectorXd::Constant(1, 0.1 * u(rng));
    out.push_back(smp);
  }
  return out;
}

TEST(DataLossTest, ExactModelHasZeroLoss) {
  auto net = random_net({2, 8, 1}, 4);
  auto batch = random_batch(net, 10, 1);
  for (auto& smp : batch) smp.y = accel(net, smp.s, smp.a);
  EXPECT_EQ(data_loss(net, std::span<const AccelSample>(batch)), 0.0);
}

TEST(DataLossTest, SingleSampleIsSquaredResidual) {
  const auto L = harmonic_oscillator_lagrangian();
  std::vector<AccelSample> batch{{GeneralizedState::scalar(0.5, 0), Force::scalar(0), Eigen::VectorXd::Constant(1, 1.0)}};
  const double r = 1.0 - accel(L, batch[0].s, batch[0].a)[0];
  EXPECT_DOUBLE_EQ(data_loss(L, std::span<const AccelSample>(batch)), r * r);
}

TEST(DataLossTest, EmptyBatchRejected) {
  auto net = random_net({2, 4, 1}, 4);
  std::vector<AccelSample> none;
  EXPECT_THROW(data_loss(net, std::span<const AccelSample>(none)), PreconditionError);
  EXPECT_THROW(data_loss_grad(net, none), PreconditionError);
}

TEST(DataLossTest, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 5; ++seed) {
    auto net = random_net({2, 8, 1}, 10 + seed);
    const auto batch = random_batch(random_net({2, 8, 1}, 99 + seed), 8, seed);
    const auto lg = data_loss_grad(net, batch);
    EXPECT_DOUBLE_EQ(lg.loss, data_loss(net, std::span<const AccelSample>(batch)));
    const auto fd = fd_gradient(
        [&](const Eigen::VectorXd& w) {
          return data_loss(ScalarNetwork(net.arch(), w), std::span<const AccelSample>(batch));
        },
        net.weights(), 1e-6);
    EXPECT_LT(max_rel_err(lg.grad, fd, 1e-3 * fd.cwiseAbs().maxCoeff()), 1e-3) << "seed " << seed;
  }
}

TEST(PhysicalResidualTest, HarmonicExactTrajectory) {
  const auto L = harmonic_oscillator_lagrangian();
  const double dt = 1e-3;
  std::vector<GeneralizedState> traj;
  for (int k = 0; k < 50; ++k) traj.push_back(GeneralizedState::scalar(std::cos(k * dt), -std::sin(k * dt)));
  std::vector<Force> forces(49, Force::scalar(0));
  EXPECT_LT(physical_residual(L, std::span<const GeneralizedState>(traj), std::span<const Force>(forces), dt), 1e-4);
}

TEST(PhysicalResidualTest, ConstantLagrangianLeavesForce) {
  const auto L = constant_lagrangian(1);
  std::vector<GeneralizedState> traj{GeneralizedState::scalar(0.1, 0.2), GeneralizedState::scalar(0.3, 0.5)};
  std::vector<Force> forces{Force::scalar(1.5)};
  EXPECT_DOUBLE_EQ(physical_residual(L, std::span<const GeneralizedState>(traj), std::span<const Force>(forces), 0.05), 2.25);
}

TEST(PhysicalResidualTest, VanishesWithStepSize) {
  const auto L = point_pendulum_lagrangian(1, 1, 10);
  auto accel_fn = [&](const GeneralizedState& s, const Force& f) { return accel(L, s, f); };
  auto residual = [&](double dt) {
    const auto s0 = GeneralizedState::scalar(0.7, 0.4);
    const auto f = Force::scalar(0.5);
    std::vector<GeneralizedState> traj{s0, rk2_step(accel_fn, s0, f, {dt, {}})};
    std::vector<Force> forces{f};
    return physical_residual(L, std::span<const GeneralizedState>(traj), std::span<const Force>(forces), dt);
  };
  const double r1 = residual(1e-2), r2 = residual(5e-3), r3 = residual(2.5e-3);
  // Residual norm is O(dt), so the squared residual falls by ~4 per halving.
  EXPECT_NEAR(r1 / r2, 4.0, 0.6);
  EXPECT_NEAR(r2 / r3, 4.0, 0.6);
}

TEST(PhysicalResidualTest, PreconditionsAndGradient) {
  auto net = random_net({2, 8, 1}, 21);
  std::vector<GeneralizedState> one{GeneralizedState::scalar(0, 0)};
  std::vector<Force> none;
  EXPECT_THROW(physical_residual(net, std::span<const GeneralizedState>(one), std::span<const Force>(none), 0.05),
               PreconditionError);
  EXPECT_THROW(physical_residual_grad(net, one, none, 0.05), PreconditionError);

  std::vector<GeneralizedState> traj{GeneralizedState::scalar(0.2, -0.3), GeneralizedState::scalar(0.18, -0.5),
                                     GeneralizedState::scalar(0.15, -0.7)};
  std::vector<Force> forces{Force::scalar(0.4), Force::scalar(-0.2)};
  const auto lg = physical_residual_grad(net, traj, forces, 0.05);
  EXPECT_NEAR(lg.loss,
              physical_residual(net, std::span<const GeneralizedState>(traj), std::span<const Force>(forces), 0.05),
              1e-10 * lg.loss);
  const auto fd = fd_gradient(
      [&](const Eigen::VectorXd& w) {
        return physical_residual(ScalarNetwork(net.arch(), w), std::span<const GeneralizedState>(traj),
                                 std::span<const Force>(forces), 0.05);
      },
      net.weights(), 1e-6);
  EXPECT_LT(max_rel_err(lg.grad, fd, 1e-3 * fd.cwiseAbs().maxCoeff()), 1e-3);
}

}  // namespace
}  // namespace lagdyna

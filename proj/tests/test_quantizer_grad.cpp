/* Copyright 2026 The LCQ Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lcq/quantizer_grad.hpp"
#include "lcq/verify.hpp"

namespace lcq {
namespace {

CompandingState worked_state(double alpha = 1.0) {
  const std::vector<double> th{std::log(3.0), 0.0};  // theta~ = (0.75, 0.25)
  return CompandingState::derive(th, alpha);
}

TEST(GradG, GammaWorkedCase) {
  const auto s = worked_state();
  const auto g = grad_g_gamma(0.3, 1.0 / 3.0, s);
  EXPECT_NEAR(g[0], 0.3 / 1.5 - (1.0 / 3.0) / 2.25, 1e-15);
  EXPECT_NEAR(g[0], 0.051852, 1e-6);
  EXPECT_EQ(g[1], 0.0);
}

TEST(GradG, BetaWorkedCase) {
  const auto g = grad_g_beta(0.3, 1.0 / 3.0, worked_state());
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(GradG, IdentityCancels) {
  const auto s = CompandingState::identity(4, 1.0);
  for (double v : {0.1, 0.3, 0.6, 0.9}) {
    for (double x : grad_g_gamma(v, v, s)) EXPECT_NEAR(x, 0.0, 1e-15);
    for (double x : grad_g_beta(v, v, s)) EXPECT_EQ(x, 0.0);
  }
}

// theta~ = (0.6, 0.4): v = 0.45 sits in input interval 0, f(v) = 0.54 rounds
// up to 2/3 on the 2-bit lattice, which lies above beta[1] = 0.6.
TEST(GradG, CrossIntervalCase) {
  const std::vector<double> th{std::log(1.5), 0.0};
  const auto s = CompandingState::derive(th, 1.0);
  const QuantSpec spec = QuantSpec::make(2, false, 0, 2);
  const double v = 0.45;
  const double vq = compressed_quantized(v, s, spec);
  EXPECT_NEAR(vq, 2.0 / 3.0, 1e-15);
  const IndicatorPair ij = indicators(v, vq, s);
  EXPECT_EQ(ij.i, 0);
  EXPECT_EQ(ij.j, 1);
  const auto gb = grad_g_beta(v, vq, s);
  EXPECT_NEAR(gb[0], 1.0 / 0.8, 1e-14);
  EXPECT_NEAR(gb[1], -1.0 / 0.8, 1e-14);
  const auto gg = grad_g_gamma(v, vq, s);
  EXPECT_NEAR(gg[0], 0.45 / 0.8, 1e-14);
  EXPECT_NEAR(gg[1], -(2.0 / 3.0 - 0.6) / 0.64, 1e-14);
}

TEST(GradQlParam, SaturationSignAndScale) {
  const auto s1 = worked_state(1.0);
  const auto s2 = worked_state(2.0);
  const QuantSpec spec = QuantSpec::make(3, true, 0, 2);
  const auto sat = grad_ql_param(1.5, s1, spec);
  for (double x : sat.d_gamma) EXPECT_EQ(x, 0.0);
  for (double x : sat.d_beta) EXPECT_EQ(x, 0.0);
  const auto p = grad_ql_param(0.3, s1, spec);
  const auto n = grad_ql_param(-0.3, s1, spec);
  const auto a2 = grad_ql_param(0.3, s2, spec);
  const double v2 = 0.15;
  const double vq2 = compressed_quantized(v2, s2, spec);
  const auto ref = grad_g_gamma(v2, vq2, s2);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(n.d_gamma[k], -p.d_gamma[k]);
    EXPECT_EQ(n.d_beta[k], -p.d_beta[k]);
    EXPECT_DOUBLE_EQ(a2.d_gamma[k], 2.0 * ref[k]);
  }
}

TEST(GradQlTheta, DiagonalChainOfWorkedCase) {
  const auto s = worked_state();
  const QuantSpec spec = QuantSpec::make(2, false, 0, 2);
  const auto t = grad_ql_theta(0.3, s, spec);
  // (K * dg/dgamma + dg/dbeta) * theta~ (1 - theta~), interval 0 only.
  EXPECT_NEAR(t[0], (2.0 * (0.3 / 1.5 - (1.0 / 3.0) / 2.25) + 0.0) * 0.75 * 0.25, 1e-15);
  EXPECT_EQ(t[1], 0.0);
  for (double x : grad_ql_theta(1.0, s, spec)) EXPECT_EQ(x, 0.0);
  for (double x : grad_ql_theta(1.0, s, spec, ThetaJacobian::kFull)) EXPECT_EQ(x, 0.0);
}

TEST(GradQlTheta, IdentityStateOnLatticeIsZero) {
  const auto s = CompandingState::identity(4, 1.0);
  const QuantSpec spec = QuantSpec::make(3, false, 0, 4);
  for (int j = 1; j < 7; ++j) {
    for (double x : grad_ql_theta(j / 7.0, s, spec)) EXPECT_NEAR(x, 0.0, 1e-15);
    for (double x : grad_ql_theta(j / 7.0, s, spec, ThetaJacobian::kFull)) EXPECT_NEAR(x, 0.0, 1e-15);
  }
}

TEST(GradQlAlpha, Examples) {
  const auto id = CompandingState::identity(1, 1.0);
  const QuantSpec u3 = QuantSpec::make(3, false);
  EXPECT_EQ(grad_ql_alpha(2.0, id, u3), 1.0);
  EXPECT_NEAR(grad_ql_alpha(0.3, id, u3), 2.0 / 7.0 - 0.3, 1e-15);
  EXPECT_NEAR(grad_ql_alpha(0.3, id, u3), -0.0142857, 1e-7);
  EXPECT_EQ(grad_ql_alpha(0.0, id, u3), 0.0);
  EXPECT_EQ(grad_ql_alpha(0.0, id, QuantSpec::make(3, true)), 0.0);
  EXPECT_EQ(grad_ql_alpha(-2.0, id, QuantSpec::make(3, true)), -1.0);
  EXPECT_EQ(grad_ql_alpha(-2.0, id, u3), 0.0);
}

TEST(GradQlAlpha, UsesRequantizedOutput) {
  const auto id = CompandingState::identity(1, 1.0);
  const QuantSpec spec = QuantSpec::make(3, false, 8, 1);
  EXPECT_NEAR(grad_ql_alpha(0.3, id, spec), 73.0 / 255.0 - 0.3, 1e-15);
}

TEST(GradQlInput, Masks) {
  const QuantSpec u = QuantSpec::make(3, false);
  const QuantSpec s = QuantSpec::make(3, true);
  EXPECT_EQ(grad_ql_input(1.5, 1.0, u, QuantRole::kActivation), 0.0);
  EXPECT_EQ(grad_ql_input(0.5, 1.0, u, QuantRole::kActivation), 1.0);
  EXPECT_EQ(grad_ql_input(-0.5, 1.0, u, QuantRole::kActivation), 0.0);
  EXPECT_EQ(grad_ql_input(-0.5, 1.0, s, QuantRole::kActivation), 1.0);
  EXPECT_EQ(grad_ql_input(1.5, 1.0, s, QuantRole::kWeight), 1.0);
  EXPECT_EQ(grad_ql_input(-7.0, 1.0, s, QuantRole::kWeight), 1.0);
}

TEST(Properties, IdentityRoundingNullGradient) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int n = 0; n < 200; ++n) {
    const int K = 1 + n % 16;
    std::vector<double> th(K);
    for (double& t : th) t = nd(rng);
    const auto st = CompandingState::derive(th, 1.7);
    const QuantSpec spec = with_identity_rounding(QuantSpec::make(2 + n % 4, n % 2 == 1, 0, K));
    for (int i = 0; i < 20; ++i) {
      const double x = 1.69 * (2.0 * std::uniform_real_distribution<double>(0, 1)(rng) - 1.0);
      if (!spec.is_signed && x <= 0) continue;
      EXPECT_NEAR(lcq_forward(x, st, spec), x, 1e-12);
      EXPECT_NEAR(grad_ql_alpha(x, st, spec), 0.0, 1e-10);
      for (double g : grad_ql_theta(x, st, spec)) EXPECT_NEAR(g, 0.0, 1e-10);
      for (double g : grad_ql_theta(x, st, spec, ThetaJacobian::kFull)) EXPECT_NEAR(g, 0.0, 1e-10);
    }
  }
}

TEST(Properties, SaturationConsistency) {
  const auto st = worked_state(1.2);
  const QuantSpec s = QuantSpec::make(3, true, 8, 2);
  for (double x : {1.2, 1.5, -1.3, 40.0}) {
    for (double g : grad_ql_theta(x, st, s, ThetaJacobian::kFull)) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(grad_ql_alpha(x, st, s), x > 0 ? 1.0 : -1.0);
    EXPECT_EQ(grad_ql_input(x, 1.2, s, QuantRole::kActivation), 0.0);
    EXPECT_EQ(grad_ql_input(x, 1.2, s, QuantRole::kWeight), 1.0);
  }
}

TEST(Properties, SignAntisymmetry) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::vector<double> th{0.4, -0.2, 1.3, -0.8, 0.1};
  const auto st = CompandingState::derive(th, 1.4);
  const QuantSpec spec = QuantSpec::make(4, true, 8, 5);
  for (int i = 0; i < 500; ++i) {
    const double x = nd(rng);
    EXPECT_EQ(grad_ql_alpha(-x, st, spec), -grad_ql_alpha(x, st, spec));
    for (auto mode : {ThetaJacobian::kDiagonal, ThetaJacobian::kFull}) {
      const auto a = grad_ql_theta(x, st, spec, mode);
      const auto b = grad_ql_theta(-x, st, spec, mode);
      for (int k = 0; k < 5; ++k) EXPECT_EQ(b[k], -a[k]);
    }
  }
}

TEST(AccumulateTensorGrads, ZeroUpstreamAndAdditivity) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::vector<double> th{0.4, -0.2, 1.3};
  const auto st = CompandingState::derive(th, 1.1);
  const QuantSpec spec = QuantSpec::make(3, true, 0, 3);
  Tensor64 xs({2, 5}), up({2, 5});
  for (std::size_t i = 0; i < xs.numel(); ++i) {
    xs[i] = nd(rng);
    up[i] = nd(rng);
  }
  const auto z = accumulate_tensor_grads(xs, Tensor64({2, 5}), st, spec, QuantRole::kActivation);
  for (double g : z.d_theta) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(z.d_alpha, 0.0);
  for (double g : z.d_input.span()) EXPECT_EQ(g, 0.0);

  for (auto mode : {ThetaJacobian::kDiagonal, ThetaJacobian::kFull}) {
    const auto g = accumulate_tensor_grads(xs, up, st, spec, QuantRole::kActivation, mode);
    std::vector<double> th_sum(3, 0.0);
    double a_sum = 0.0;
    for (std::size_t i = 0; i < xs.numel(); ++i) {
      const auto t = grad_ql_theta(xs[i], st, spec, mode);
      for (int k = 0; k < 3; ++k) th_sum[k] += up[i] * t[k];
      a_sum += up[i] * grad_ql_alpha(xs[i], st, spec);
      EXPECT_EQ(g.d_input[i], up[i] * grad_ql_input(xs[i], 1.1, spec, QuantRole::kActivation));
    }
    EXPECT_EQ(g.d_theta, th_sum);
    EXPECT_EQ(g.d_alpha, a_sum);
  }
  EXPECT_THROW(accumulate_tensor_grads(xs, Tensor64({10}), st, spec, QuantRole::kActivation),
               ShapeMismatch);
}

TEST(FiniteDifference, ComponentAndJacobianChecks) {
  for (const auto& r : verify::check_component_fd(500, 3)) EXPECT_TRUE(r.passed) << r.name << " " << r.max_error;
  const auto j = verify::check_theta_jacobian_fd(200, 4);
  EXPECT_TRUE(j.passed) << j.max_error;
}

}  // namespace
}  // namespace lcq

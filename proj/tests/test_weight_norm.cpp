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

#include "lcq/weight_norm.hpp"

namespace lcq {
namespace {

double pop_std(const Tensor64& t) {
  double m = 0.0;
  for (double x : t.span()) m += x;
  m /= static_cast<double>(t.numel());
  double s = 0.0;
  for (double x : t.span()) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(t.numel()));
}

Tensor64 random_weights(std::uint64_t seed, std::size_t n = 64) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.3, 0.7);
  Tensor64 w({static_cast<int>(n)});
  for (double& x : w.span()) x = nd(rng);
  return w;
}

TEST(WeightStats, Examples) {
  const auto s = weight_stats(Tensor64({4}, std::vector<double>{1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(s.mu, 2.5);
  EXPECT_DOUBLE_EQ(s.sigma, std::sqrt(1.25));
  EXPECT_NEAR(s.sigma, 1.118034, 1e-6);
  const auto z = weight_stats(Tensor64({2}, std::vector<double>{0, 0}));
  EXPECT_EQ(z.mu, 0.0);
  EXPECT_EQ(z.sigma, 1e-8);
  const auto a = weight_stats(Tensor64({2}, std::vector<double>{-0.7, 0.7}));
  EXPECT_EQ(a.mu, 0.0);
  EXPECT_DOUBLE_EQ(a.sigma, 0.7);
  EXPECT_THROW(weight_stats(Tensor64({1}, std::vector<double>{1})), ContractViolation);
}

TEST(LwnQuantize, IdentityQuantizerGivesCenteredWeights) {
  const Tensor64 w = random_weights(1);
  const auto stats = weight_stats(w);
  const auto st = CompandingState::identity(4, 100.0);  // nothing saturates
  const QuantSpec spec = with_identity_rounding(QuantSpec::make(4, true, 0, 4));
  const Tensor64 out = lwn_quantize(w, st, spec);
  for (std::size_t i = 0; i < w.numel(); ++i) EXPECT_NEAR(out[i], w[i] - stats.mu, 1e-12);
}

TEST(LwnQuantize, TernaryAntisymmetric) {
  const double a = 0.37;
  const auto st = CompandingState::identity(1, 1.0);
  const QuantSpec spec = QuantSpec::make(2, true);
  const Tensor64 out =
      lwn_quantize(Tensor64({2}, std::vector<double>{-a, a}), st, spec, QuantizerKind::kUniform);
  // Standardized values are -1 and +1; the ternary quantizer keeps them and
  // sigma = a restores the scale.
  EXPECT_DOUBLE_EQ(out[0], -a);
  EXPECT_DOUBLE_EQ(out[1], a);
  EXPECT_THROW(lwn_quantize(Tensor64({2}, std::vector<double>{-a, a}), st, QuantSpec::make(2, false)),
               ContractViolation);
}

TEST(LwnQuantize, ShiftInvariance) {
  const std::vector<double> th{0.5, -0.3, 0.2, 0.9};
  const auto st = CompandingState::derive(th, 2.0);
  const QuantSpec spec = QuantSpec::make(3, true, 8, 4);
  const Tensor64 w = random_weights(2);
  const Tensor64 base = lwn_quantize(w, st, spec);
  // Shifts representable without rounding keep the standardized values bitwise.
  for (double c : {0.5, -2.0, 4.0}) {
    Tensor64 ws = w;
    for (double& x : ws.span()) x += c;
    const Tensor64 out = lwn_quantize(ws, st, spec);
    for (std::size_t i = 0; i < w.numel(); ++i) EXPECT_NEAR(out[i], base[i], 1e-12);
  }
}

TEST(LwnQuantize, ScaleEquivariance) {
  const std::vector<double> th{0.5, -0.3, 0.2, 0.9};
  const auto st = CompandingState::derive(th, 2.0);
  const QuantSpec spec = QuantSpec::make(4, true, 8, 4);
  const Tensor64 w = random_weights(3);
  const Tensor64 base = lwn_quantize(w, st, spec);
  for (double c : {0.25, 2.0, 8.0}) {
    Tensor64 ws = w;
    for (double& x : ws.span()) x *= c;
    const Tensor64 out = lwn_quantize(ws, st, spec);
    for (std::size_t i = 0; i < w.numel(); ++i) EXPECT_NEAR(out[i], c * base[i], 1e-12 * c);
  }
}

TEST(LwnQuantize, StdRestoration) {
  const std::vector<double> th{0.5, -0.3, 0.2, 0.9};
  const auto st = CompandingState::derive(th, 2.0);
  const QuantSpec spec = QuantSpec::make(3, true, 8, 4);
  const Tensor64 w = random_weights(4, 200);
  const auto stats = weight_stats(w);
  const Tensor64 lim = lwn_quantize(w, st, spec, QuantizerKind::kCompanding, WeightNorm::kLimited);
  const Tensor64 bare =
      lwn_quantize(w, st, spec, QuantizerKind::kCompanding, WeightNorm::kStandardizeOnly);
  EXPECT_NEAR(pop_std(lim) / pop_std(bare), stats.sigma, 1e-12);
  for (std::size_t i = 0; i < w.numel(); ++i) EXPECT_NEAR(lim[i], stats.sigma * bare[i], 1e-15);
}

TEST(LwnBackward, SigmaFactors) {
  const std::vector<double> th{0.5, -0.3, 0.2, 0.9};
  const auto st = CompandingState::derive(th, 2.0);
  const QuantSpec spec = QuantSpec::make(3, true, 8, 4);
  const Tensor64 w = random_weights(5);
  const auto stats = weight_stats(w);
  const Tensor64 z = standardize(w, stats);
  Tensor64 up(w.shape());
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (double& x : up.span()) x = nd(rng);
  const auto raw = accumulate_tensor_grads(z, up, st, spec, QuantRole::kWeight);
  const auto lim = lwn_backward(z, up, stats, st, spec, QuantizerKind::kCompanding, WeightNorm::kLimited);
  const auto bare =
      lwn_backward(z, up, stats, st, spec, QuantizerKind::kCompanding, WeightNorm::kStandardizeOnly);
  EXPECT_DOUBLE_EQ(lim.d_alpha, stats.sigma * raw.d_alpha);
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(lim.d_theta[k], stats.sigma * raw.d_theta[k]);
  for (std::size_t i = 0; i < w.numel(); ++i) {
    EXPECT_EQ(lim.d_input[i], up[i]);
    EXPECT_DOUBLE_EQ(bare.d_input[i], up[i] / stats.sigma);
  }
  const auto uni = lwn_backward(z, up, stats, st, spec, QuantizerKind::kUniform, WeightNorm::kLimited);
  for (double t : uni.d_theta) EXPECT_EQ(t, 0.0);
}

}  // namespace
}  // namespace lcq

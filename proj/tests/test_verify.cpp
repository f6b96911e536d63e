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

#include "lcq/quantizer_grad.hpp"
#include "lcq/verify.hpp"

namespace lcq::verify {
namespace {

TEST(FdGradient, Examples) {
  EXPECT_NEAR(fd_gradient([](double x) { return x * x; }, 3.0), 6.0, 1e-9);
  EXPECT_NEAR(fd_gradient([](double x) { return std::abs(x); }, 0.5), 1.0, 1e-10);
}

// d f(0.25) / d theta~_1 with theta~ = (t, 1 - t): f = K t * 0.25 on the
// first interval.
TEST(FdGradient, CompressAgainstAnalytic) {
  const double t0 = 0.75;
  auto f = [](double t) { return ref_compress(0.25, ref_tables({std::log(t / (1 - t)), 0.0})); };
  const auto st = CompandingState::derive(std::vector<double>{std::log(3.0), 0.0}, 1.0);
  const auto cg = grad_compress_params(0.25, st.table<double>());
  EXPECT_EQ(cg.interval, 0);
  const double analytic = cg.d_gamma * st.intervals();  // d gamma_1 / d theta~_1 = K
  EXPECT_NEAR(fd_gradient(f, t0), analytic, 1e-8);
  EXPECT_NEAR(analytic, 0.5, 1e-15);
}

TEST(ReferenceTables, MatchLibrary) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int K : {1, 2, 5, 16}) {
    std::vector<double> th(K);
    for (double& t : th) t = nd(rng);
    const RefTables r = ref_tables(th);
    const auto st = CompandingState::derive(th, 1.0);
    for (int k = 0; k < K; ++k) {
      EXPECT_NEAR(r.gamma[k], st.gamma()[k], 1e-13);
      EXPECT_NEAR(r.beta[k], st.beta()[k], 1e-14);
    }
    for (double v = 0.0; v < 1.0; v += 0.013) {
      EXPECT_NEAR(ref_compress(v, r), compress(v, st.table<double>()), 1e-13);
      EXPECT_NEAR(ref_expand(ref_compress(v, r), r), v, 1e-12);
    }
  }
}

TEST(BruteForceLevels, Examples) {
  EXPECT_EQ(enumerate_levels_bruteforce({0.0}, 1.0, QuantSpec::make(2, false), 100000).size(), 4u);
  EXPECT_EQ(enumerate_levels_bruteforce({0.0}, 1.0, QuantSpec::make(2, true), 100000),
            (std::vector<double>{-1.0, 0.0, 1.0}));
  const std::vector<double> th{std::log(3.0), 0.0};
  const QuantSpec spec = QuantSpec::make(2, false, 8, 2);
  const auto bf = enumerate_levels_bruteforce(th, 1.0, spec);
  EXPECT_EQ(bf, quant_levels<double>(CompandingState::derive(th, 1.0), spec));
  EXPECT_EQ(bf, (std::vector<double>{0.0, 57.0 / 255.0, 113.0 / 255.0, 1.0}));
}

TEST(BruteForceLevels, MatchQuantLevelsOnRandomStates) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int n = 0; n < 12; ++n) {
    const int K = 1 + n;
    std::vector<double> th(K);
    for (double& t : th) t = nd(rng);
    const QuantSpec spec = QuantSpec::make(2 + n % 3, n % 2 == 0, 8, K);
    EXPECT_EQ(enumerate_levels_bruteforce(th, 1.5, spec, 200000),
              quant_levels<double>(CompandingState::derive(th, 1.5), spec))
        << "K=" << K;
  }
}

TEST(Suites, NullGradientAndReport) {
  const CheckResult r = check_null_gradient(200, 3);
  EXPECT_TRUE(r.passed) << r.max_error;
  EXPECT_GT(r.count, 0);
  const std::string csv = results_csv({r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "check,samples,max_error,tolerance,passed");
  EXPECT_TRUE(all_passed({r}));
  CheckResult bad = r;
  bad.passed = false;
  EXPECT_FALSE(all_passed({r, bad}));
}

}  // namespace
}  // namespace lcq::verify

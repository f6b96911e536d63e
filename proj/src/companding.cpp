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

#include "lcq/companding.hpp"

#include <cmath>
#include <numeric>

namespace lcq {
namespace {

template <typename To>
PiecewiseLinear<To> cast_table(const PiecewiseLinear<double>& t) {
  PiecewiseLinear<To> out;
  out.gamma.assign(t.gamma.begin(), t.gamma.end());
  out.beta.assign(t.beta.begin(), t.beta.end());
  out.d.assign(t.d.begin(), t.d.end());
  return out;
}

}  // namespace

CompandingState CompandingState::derive(std::span<const double> theta_raw, double alpha) {
  LCQ_CHECK(!theta_raw.empty(), ContractViolation, "derive: need at least one interval");
  LCQ_CHECK(std::isfinite(alpha) && alpha > 0.0, ContractViolation,
            "derive: clipping value must be positive and finite");
  for (double t : theta_raw) {
    LCQ_CHECK(std::isfinite(t), ParameterCorruption, "derive: non-finite companding parameter");
  }

  const std::size_t k_count = theta_raw.size();
  CompandingState s{Uninit{}};
  s.theta_raw_.assign(theta_raw.begin(), theta_raw.end());
  s.alpha_ = alpha;

  // Max-shifted softmax.
  const double peak = *std::max_element(theta_raw.begin(), theta_raw.end());
  s.theta_tilde_.resize(k_count);
  double total = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    s.theta_tilde_[k] = std::exp(theta_raw[k] - peak);
    total += s.theta_tilde_[k];
  }
  for (double& t : s.theta_tilde_) t /= total;

  // d and beta are accumulated the same way so that an all-zero theta gives
  // bit-identical breakpoint tables (and therefore an exact identity map).
  const double delta = 1.0 / static_cast<double>(k_count);
  auto& t = s.t64_;
  t.gamma.resize(k_count);
  t.beta.assign(k_count + 1, 0.0);
  t.d.assign(k_count + 1, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    t.gamma[k] = std::max(s.theta_tilde_[k], kMinThetaTilde) / delta;
    t.beta[k + 1] = t.beta[k] + s.theta_tilde_[k];
    t.d[k + 1] = t.d[k] + delta;
  }
  t.beta[k_count] = 1.0;
  t.d[k_count] = 1.0;
  s.t32_ = cast_table<float>(t);
  return s;
}

CompandingState CompandingState::identity(int intervals, double alpha) {
  LCQ_CHECK(intervals >= 1, ContractViolation, "identity: need at least one interval");
  std::vector<double> zeros(static_cast<std::size_t>(intervals), 0.0);
  return derive(zeros, alpha);
}

CompandingState CompandingState::with_alpha(double alpha) const {
  LCQ_CHECK(std::isfinite(alpha) && alpha > 0.0, ContractViolation,
            "with_alpha: clipping value must be positive and finite");
  CompandingState s = *this;
  s.alpha_ = alpha;
  return s;
}

}  // namespace lcq

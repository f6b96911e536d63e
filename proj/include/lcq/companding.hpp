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

#ifndef LCQ_COMPANDING_HPP_
#define LCQ_COMPANDING_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#include "lcq/error.hpp"

namespace lcq {

// Smallest softmax weight used when forming a slope. Keeps 1/gamma bounded.
inline constexpr double kMinThetaTilde = 1e-6;

// Breakpoint tables of a monotone piecewise-linear map on [0, 1).
//
// Interval k (0-based) covers inputs [d[k], d[k+1]) with slope gamma[k], and
// maps onto outputs [beta[k], beta[k+1]). d and beta both start at 0 and end
// at exactly 1.
template <typename T>
struct PiecewiseLinear {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> d;

  int intervals() const { return static_cast<int>(gamma.size()); }

  // Index k with d[k] <= v < d[k+1]; v >= d[K-1] lands in the last interval.
  int input_interval(T v) const { return search(d, v); }
  // Index k with beta[k] <= u < beta[k+1]; u >= beta[K-1] lands in the last interval.
  int output_interval(T u) const { return search(beta, u); }

 private:
  static int search(const std::vector<T>& bp, T x) {
    // Binary search over the interior breakpoints bp[1..K-1].
    const auto first = bp.begin() + 1;
    const auto last = bp.end() - 1;
    return static_cast<int>(std::upper_bound(first, last, x) - first);
  }
};

namespace detail {

template <typename T>
constexpr T below_one() {
  return static_cast<T>(1) - std::numeric_limits<T>::epsilon();
}

// Unchecked f(v). Output is kept strictly below 1.
template <typename T>
T compress(T v, const PiecewiseLinear<T>& t) {
  const int k = t.input_interval(v);
  const T u = t.gamma[k] * (v - t.d[k]) + t.beta[k];
  return u < static_cast<T>(1) ? u : below_one<T>();
}

// Unchecked f^{-1}(u). f^{-1}(1) = 1 exactly; inputs below 1 stay below 1.
template <typename T>
T expand(T u, const PiecewiseLinear<T>& t) {
  if (u >= static_cast<T>(1)) return static_cast<T>(1);
  const int k = t.output_interval(u);
  const T v = (u - t.beta[k]) / t.gamma[k] + t.d[k];
  return v < static_cast<T>(1) ? v : below_one<T>();
}

}  // namespace detail

// Compressing function f. Requires v in [0, 1).
template <typename T>
T compress(T v, const PiecewiseLinear<T>& t) {
  LCQ_CHECK(v >= static_cast<T>(0) && v < static_cast<T>(1), ContractViolation,
            "compress: input outside [0, 1)");
  return detail::compress(v, t);
}

// Expanding function f^{-1}. Inputs at or above 1 are clamped to the top of
// the range (the companding output after rounding up to the last level);
// negative inputs are a contract violation.
template <typename T>
T expand(T u, const PiecewiseLinear<T>& t) {
  LCQ_CHECK(u >= static_cast<T>(0) && !std::isnan(u), ContractViolation,
            "expand: negative or NaN input");
  return detail::expand(u, t);
}

// Learnable companding parameters of one quantizer and the tables derived
// from them. Immutable once built; rebuild with derive() after every update.
class CompandingState {
 public:
  // Identity compressor with K intervals (all theta = 0).
  CompandingState() : CompandingState(identity(1, 1.0)) {}

  // Softmax-normalizes theta_raw into interval weights and builds the
  // slope/breakpoint tables. Throws ParameterCorruption on non-finite theta
  // and ContractViolation on an empty theta or a non-positive alpha.
  static CompandingState derive(std::span<const double> theta_raw, double alpha);
  static CompandingState identity(int intervals, double alpha);

  int intervals() const { return static_cast<int>(theta_raw_.size()); }
  double alpha() const { return alpha_; }
  double delta() const { return 1.0 / intervals(); }

  std::span<const double> theta_raw() const { return theta_raw_; }
  std::span<const double> theta_tilde() const { return theta_tilde_; }
  std::span<const double> gamma() const { return t64_.gamma; }
  std::span<const double> beta() const { return t64_.beta; }
  std::span<const double> breakpoints() const { return t64_.d; }

  // True when the slope of interval k was raised to the kMinThetaTilde floor.
  bool floored(int k) const { return theta_tilde_[k] < kMinThetaTilde; }

  // Tables at working precision T (float or double).
  template <typename T>
  const PiecewiseLinear<T>& table() const {
    if constexpr (std::is_same_v<T, float>) {
      return t32_;
    } else {
      static_assert(std::is_same_v<T, double>, "tables exist for float and double");
      return t64_;
    }
  }

  // Copy with a different clipping value; tables are reused.
  CompandingState with_alpha(double alpha) const;

 private:
  struct Uninit {};
  explicit CompandingState(Uninit) {}

  std::vector<double> theta_raw_;
  std::vector<double> theta_tilde_;
  double alpha_ = 1.0;
  PiecewiseLinear<double> t64_;
  PiecewiseLinear<float> t32_;
};

template <typename T>
T compress(T v, const CompandingState& s) {
  return compress(v, s.table<T>());
}

template <typename T>
T expand(T u, const CompandingState& s) {
  return expand(u, s.table<T>());
}

}  // namespace lcq

#endif  // LCQ_COMPANDING_HPP_

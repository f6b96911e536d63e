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

#ifndef LCQ_QUANTIZER_GRAD_HPP_
#define LCQ_QUANTIZER_GRAD_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lcq/companding.hpp"
#include "lcq/quantizer.hpp"
#include "lcq/tensor.hpp"

// Backward pass of the LCQ quantizer. Rounding steps use the straight-through
// estimator; the input gradient is passed straight through inside the clip
// range rather than scaled by the slope ratio of the two intervals involved.
//
// Interval indices are 0-based: interval k spans inputs [d[k], d[k+1]) and
// outputs [beta[k], beta[k+1]). Gradient slot k of the beta vector refers to
// the lower output breakpoint beta[k] of interval k.

namespace lcq {

enum class QuantRole : std::uint8_t { kWeight, kActivation };

// How d/dtheta is assembled from the slope and breakpoint gradients.
//   kDiagonal: per-index chain, d gamma_k/d theta~_k = K, d beta_k/d theta~_k = 1
//              and the diagonal of the softmax Jacobian only.
//   kFull:     exact Jacobian of softmax and of the cumulative sum.
enum class ThetaJacobian : std::uint8_t { kDiagonal, kFull };

// Interval of v among the input breakpoints (i) and of v_q among the output
// breakpoints (j).
struct IndicatorPair {
  int i = 0;
  int j = 0;
};

// Rounding output moved inside [0, 1): values at or above 1 become 1 - eps,
// eps being one ulp of 1.0 at precision T.
template <typename T>
T inside_unit(T vq) {
  return vq < static_cast<T>(1) ? vq : detail::below_one<T>();
}

// v_q = q_b(f(v)) with the eps correction applied.
template <typename T>
T compressed_quantized(T v, const CompandingState& state, const QuantSpec& spec) {
  const T u = detail::compress(v, state.table<T>());
  return inside_unit(detail::lattice_quantize(u, static_cast<T>(spec.scale()), spec.rounding));
}

template <typename T>
IndicatorPair indicators(T v, T vq, const CompandingState& state) {
  const auto& t = state.table<T>();
  return {t.input_interval(v), t.output_interval(inside_unit(vq))};
}

// Partial derivatives of f(v) with respect to the slope and lower breakpoint
// of the interval containing v (all other slots are zero).
template <typename T>
struct ComponentGrad {
  int interval = 0;
  T d_gamma = 0;
  T d_beta = 0;
};

template <typename T>
ComponentGrad<T> grad_compress_params(T v, const PiecewiseLinear<T>& t) {
  const int k = t.input_interval(v);
  return {k, v - t.d[k], static_cast<T>(1)};
}

// Same for f^{-1}(u) with respect to the interval containing u.
template <typename T>
ComponentGrad<T> grad_expand_params(T u, const PiecewiseLinear<T>& t) {
  const int k = t.output_interval(u);
  const T g = t.gamma[k];
  return {k, -(u - t.beta[k]) / (g * g), -static_cast<T>(1) / g};
}

// d g(v) / d gamma_k for all k. At most two slots are non-zero: the interval
// of v receives (v - d_i) / gamma_j and the interval j of v_q receives
// -(v_q - beta_j) / gamma_j^2.
template <typename T>
std::vector<T> grad_g_gamma(T v, T vq, const CompandingState& state) {
  const auto& t = state.table<T>();
  const T q = inside_unit(vq);
  const IndicatorPair ij = indicators(v, q, state);
  std::vector<T> out(static_cast<std::size_t>(t.intervals()), T{0});
  const T gj = t.gamma[ij.j];
  out[ij.i] += (v - t.d[ij.i]) / gj;
  out[ij.j] -= (q - t.beta[ij.j]) / (gj * gj);
  return out;
}

// d g(v) / d beta_k for all k: +1/gamma_j at the interval of v and -1/gamma_j
// at the interval of v_q.
template <typename T>
std::vector<T> grad_g_beta(T v, T vq, const CompandingState& state) {
  const auto& t = state.table<T>();
  const IndicatorPair ij = indicators(v, inside_unit(vq), state);
  std::vector<T> out(static_cast<std::size_t>(t.intervals()), T{0});
  const T inv = static_cast<T>(1) / t.gamma[ij.j];
  out[ij.i] += inv;
  out[ij.j] -= inv;
  return out;
}

template <typename T>
struct ParamGrad {
  std::vector<T> d_gamma;
  std::vector<T> d_beta;
};

namespace detail {

template <typename T>
T sign_of(T x) {
  return static_cast<T>((x > T{0}) - (x < T{0}));
}

// True when x lies strictly inside the clip range on the quantizer's domain,
// i.e. the branch where the companding parameters receive gradient.
template <typename T>
bool in_companding_branch(T x, T alpha, const QuantSpec& spec) {
  if (!spec.is_signed && !(x > T{0})) return false;
  return std::abs(x) < alpha && x != T{0};
}

// Writes d Q / d theta for one element into out (size K) and returns the
// touched slots (-1 for none). `out` must be zero on entry for kDiagonal;
// kFull overwrites every slot.
template <typename T>
std::array<int, 2> theta_grad_into(T x, const CompandingState& state, const QuantSpec& spec,
                                   ThetaJacobian mode, std::span<T> out) {
  const auto& t = state.table<T>();
  const int K = t.intervals();
  const T alpha = static_cast<T>(state.alpha());
  if (!in_companding_branch(x, alpha, spec)) {
    if (mode == ThetaJacobian::kFull) std::fill(out.begin(), out.end(), T{0});
    return {-1, -1};
  }
  const T scale = sign_of(x) * alpha;
  const T v = std::abs(x) / alpha;
  const T vq = compressed_quantized(v, state, spec);
  const IndicatorPair ij = indicators(v, vq, state);
  const T gj = t.gamma[ij.j];
  const T inv = static_cast<T>(1) / gj;
  // Slope and breakpoint gradients of Q (sgn(x) * alpha * dg).
  const T dgam_i = scale * ((v - t.d[ij.i]) * inv);
  const T dgam_j = scale * (-(vq - t.beta[ij.j]) / (gj * gj));
  const T dbet_i = scale * inv;
  const T dbet_j = scale * -inv;
  const auto tt = state.theta_tilde();
  const T slope_scale = static_cast<T>(K);

  if (mode == ThetaJacobian::kDiagonal) {
    auto add = [&](int k, T dgam, T dbet) {
      const T th = static_cast<T>(tt[k]);
      const T dg = state.floored(k) ? T{0} : dgam * slope_scale;
      out[k] += (dg + dbet) * (th * (static_cast<T>(1) - th));
    };
    if (ij.i == ij.j) {
      add(ij.i, dgam_i + dgam_j, dbet_i + dbet_j);
      return {ij.i, -1};
    }
    add(ij.i, dgam_i, dbet_i);
    add(ij.j, dgam_j, dbet_j);
    return {ij.i, ij.j};
  }

  // Full Jacobian: G_m = dQ/d theta~_m = K dQ/d gamma_m + sum_{k > m} dQ/d beta[k],
  // since beta[k] = sum_{m < k} theta~_m. Then dQ/d theta_n = theta~_n (G_n - <theta~, G>).
  std::fill(out.begin(), out.end(), T{0});
  if (!state.floored(ij.i)) out[ij.i] += dgam_i * slope_scale;
  if (!state.floored(ij.j)) out[ij.j] += dgam_j * slope_scale;
  for (int m = 0; m < K; ++m) {
    if (m < ij.i) out[m] += dbet_i;
    if (m < ij.j) out[m] += dbet_j;
  }
  T dot = 0;
  for (int m = 0; m < K; ++m) dot += static_cast<T>(tt[m]) * out[m];
  for (int m = 0; m < K; ++m) out[m] = static_cast<T>(tt[m]) * (out[m] - dot);
  return {0, K - 1};
}

}  // namespace detail

// Gradient of Q with respect to every gamma_k and beta_k; zero outside the
// clip range.
template <typename T>
ParamGrad<T> grad_ql_param(T x, const CompandingState& state, const QuantSpec& spec) {
  const int K = state.intervals();
  ParamGrad<T> out{std::vector<T>(K, T{0}), std::vector<T>(K, T{0})};
  const T alpha = static_cast<T>(state.alpha());
  if (!detail::in_companding_branch(x, alpha, spec)) return out;
  const T v = std::abs(x) / alpha;
  const T vq = compressed_quantized(v, state, spec);
  const T scale = detail::sign_of(x) * alpha;
  auto dg = grad_g_gamma(v, vq, state);
  auto db = grad_g_beta(v, vq, state);
  for (int k = 0; k < K; ++k) {
    out.d_gamma[k] = scale * dg[k];
    out.d_beta[k] = scale * db[k];
  }
  return out;
}

template <typename T>
std::vector<T> grad_ql_theta(T x, const CompandingState& state, const QuantSpec& spec,
                             ThetaJacobian mode = ThetaJacobian::kDiagonal) {
  std::vector<T> out(static_cast<std::size_t>(state.intervals()), T{0});
  detail::theta_grad_into<T>(x, state, spec, mode, out);
  return out;
}

// Normalized forward output q / alpha for a clipped magnitude v in [0, 1):
// the companding output, re-quantized when `spec` asks for it.
template <typename T>
T normalized_output(T v, const CompandingState& state, const QuantSpec& spec) {
  T g = detail::compand(v, state.table<T>(), spec);
  if (spec.requantizes()) {
    g = detail::lattice_quantize(g, static_cast<T>(spec.outer_scale()), spec.rounding);
  }
  return g;
}

// dQ/d alpha: sgn(x) (q(|x|/alpha) - |x|/alpha) inside the clip range,
// sgn(x) outside. q is the quantizer's own normalized output.
template <typename T>
T grad_ql_alpha(T x, const CompandingState& state, const QuantSpec& spec) {
  const T alpha = static_cast<T>(state.alpha());
  if (!spec.is_signed && !(x > T{0})) return T{0};
  const T mag = std::abs(x);
  if (mag >= alpha) return detail::sign_of(x);
  if (x == T{0}) return T{0};
  const T v = mag / alpha;
  return detail::sign_of(x) * (normalized_output(v, state, spec) - v);
}

// dQ/dx: 1 inside the clip range (0 < x < alpha when unsigned) and 0 outside,
// except for weight quantizers, which pass the gradient everywhere.
template <typename T>
T grad_ql_input(T x, double alpha, const QuantSpec& spec, QuantRole role) {
  if (role == QuantRole::kWeight) return T{1};
  const T a = static_cast<T>(alpha);
  if (!spec.is_signed) return (x > T{0} && x < a) ? T{1} : T{0};
  return std::abs(x) < a ? T{1} : T{0};
}

// Tensor-level sums of the scalar rules weighted by the upstream gradient.
// Reductions run in element order in double precision: for every k,
// d_theta[k] = sum_i double(up_i) * double(grad_ql_theta(x_i)[k]).
template <typename T>
struct TensorGrads {
  std::vector<double> d_theta;
  double d_alpha = 0.0;
  BasicTensor<T> d_input;
};

template <typename T>
TensorGrads<T> accumulate_tensor_grads(const BasicTensor<T>& xs, const BasicTensor<T>& upstream,
                                       const CompandingState& state, const QuantSpec& spec,
                                       QuantRole role,
                                       ThetaJacobian mode = ThetaJacobian::kDiagonal) {
  require_same_shape(xs, upstream, "accumulate_tensor_grads");
  const int K = state.intervals();
  TensorGrads<T> g;
  g.d_theta.assign(static_cast<std::size_t>(K), 0.0);
  g.d_input = BasicTensor<T>(xs.shape());
  std::vector<T> scratch(static_cast<std::size_t>(K), T{0});
  const double alpha = state.alpha();
  for (std::size_t n = 0; n < xs.numel(); ++n) {
    const T x = xs[n];
    const T up = upstream[n];
    g.d_input[n] = up * grad_ql_input(x, alpha, spec, role);
    g.d_alpha += static_cast<double>(up) * static_cast<double>(grad_ql_alpha(x, state, spec));
    const auto touched = detail::theta_grad_into<T>(x, state, spec, mode, scratch);
    if (touched[0] < 0) continue;
    if (mode == ThetaJacobian::kDiagonal) {
      for (int k : touched) {
        if (k < 0) continue;
        g.d_theta[k] += static_cast<double>(up) * static_cast<double>(scratch[k]);
        scratch[k] = T{0};
      }
    } else {
      for (int k = 0; k < K; ++k) {
        g.d_theta[k] += static_cast<double>(up) * static_cast<double>(scratch[k]);
      }
    }
  }
  return g;
}

}  // namespace lcq

#endif  // LCQ_QUANTIZER_GRAD_HPP_

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

#ifndef LCQ_WEIGHT_NORM_HPP_
#define LCQ_WEIGHT_NORM_HPP_

#include <cmath>

#include "lcq/quantizer.hpp"
#include "lcq/quantizer_grad.hpp"
#include "lcq/tensor.hpp"

namespace lcq {

inline constexpr double kMinWeightSigma = 1e-8;

// Per-layer weight statistics. Treated as constants by the backward pass.
struct WeightStats {
  double mu = 0.0;
  double sigma = 1.0;
};

// Mean and population standard deviation (divide by N) over the whole tensor,
// accumulated in element order in double. sigma is floored at 1e-8.
template <typename T>
WeightStats weight_stats(const BasicTensor<T>& w) {
  LCQ_CHECK(w.numel() >= 2, ContractViolation, "weight_stats: need at least two weights");
  double sum = 0.0;
  for (T x : w.span()) sum += static_cast<double>(x);
  const double n = static_cast<double>(w.numel());
  const double mu = sum / n;
  double sq = 0.0;
  for (T x : w.span()) {
    const double c = static_cast<double>(x) - mu;
    sq += c * c;
  }
  return {mu, std::max(std::sqrt(sq / n), kMinWeightSigma)};
}

// Which quantizer a weight or activation tensor goes through.
//   kCompanding: LCQ (re-quantized when `spec` has an outer bit-width).
//   kUniform:    clipped uniform quantizer; companding parameters unused.
enum class QuantizerKind : std::uint8_t { kCompanding, kUniform };

template <typename T>
T quantize_value(T x, const CompandingState& state, const QuantSpec& spec, QuantizerKind kind) {
  if (kind == QuantizerKind::kUniform) return clip_uniform_quantize(x, state.alpha(), spec);
  return lcq_quantize(x, state, spec);
}

// kLimited restores sigma after quantizing the standardized weights;
// kStandardizeOnly leaves the quantizer output in standardized units (the
// normalization baseline used for ablations).
enum class WeightNorm : std::uint8_t { kLimited, kStandardizeOnly };

template <typename T>
BasicTensor<T> standardize(const BasicTensor<T>& w, const WeightStats& stats) {
  BasicTensor<T> z(w.shape());
  const T mu = static_cast<T>(stats.mu);
  const T sigma = static_cast<T>(stats.sigma);
  for (std::size_t i = 0; i < w.numel(); ++i) z[i] = (w[i] - mu) / sigma;
  return z;
}

// sigma * Q((w - mu) / sigma) for kLimited, Q((w - mu) / sigma) otherwise.
// The mean is not added back.
template <typename T>
BasicTensor<T> lwn_quantize(const BasicTensor<T>& w, const WeightStats& stats,
                            const CompandingState& state, const QuantSpec& spec,
                            QuantizerKind kind = QuantizerKind::kCompanding,
                            WeightNorm norm = WeightNorm::kLimited) {
  LCQ_CHECK(spec.is_signed, ContractViolation, "lwn_quantize: weight quantizers are signed");
  BasicTensor<T> out = standardize(w, stats);
  const T sigma = norm == WeightNorm::kLimited ? static_cast<T>(stats.sigma) : T{1};
  for (T& z : out.span()) z = sigma * quantize_value(z, state, spec, kind);
  return out;
}

template <typename T>
BasicTensor<T> lwn_quantize(const BasicTensor<T>& w, const CompandingState& state,
                            const QuantSpec& spec,
                            QuantizerKind kind = QuantizerKind::kCompanding,
                            WeightNorm norm = WeightNorm::kLimited) {
  return lwn_quantize(w, weight_stats(w), state, spec, kind, norm);
}

// Backward of lwn_quantize given the standardized weights z and dL/d(output).
// Weight gradients pass straight through (the sigma factors cancel under
// kLimited; 1/sigma remains under kStandardizeOnly). Companding and clip
// gradients carry the sigma factor under kLimited.
template <typename T>
TensorGrads<T> lwn_backward(const BasicTensor<T>& z, const BasicTensor<T>& upstream,
                            const WeightStats& stats, const CompandingState& state,
                            const QuantSpec& spec, QuantizerKind kind, WeightNorm norm,
                            ThetaJacobian mode = ThetaJacobian::kDiagonal) {
  TensorGrads<T> g =
      accumulate_tensor_grads(z, upstream, state, spec, QuantRole::kWeight, mode);
  if (kind == QuantizerKind::kUniform) std::fill(g.d_theta.begin(), g.d_theta.end(), 0.0);
  if (norm == WeightNorm::kLimited) {
    g.d_alpha *= stats.sigma;
    for (double& t : g.d_theta) t *= stats.sigma;
  } else {
    const T inv = static_cast<T>(1.0 / stats.sigma);
    for (T& d : g.d_input.span()) d *= inv;
  }
  return g;
}

}  // namespace lcq

#endif  // LCQ_WEIGHT_NORM_HPP_

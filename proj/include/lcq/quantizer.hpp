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

#ifndef LCQ_QUANTIZER_HPP_
#define LCQ_QUANTIZER_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "lcq/companding.hpp"
#include "lcq/error.hpp"
#include "lcq/quant_spec.hpp"

namespace lcq {

// Round half away from zero.
template <typename T>
T round_half_away(T x) {
  return std::round(x);
}

namespace detail {

// round(s * v) / s, or v itself under identity rounding.
template <typename T>
T lattice_quantize(T v, T scale, Rounding rounding) {
  if (rounding == Rounding::kIdentity) return v;
  return round_half_away(scale * v) / scale;
}

// Companding g(v) = f^{-1}(q_b(f(v))) for v in [0, 1), unchecked.
template <typename T>
T compand(T v, const PiecewiseLinear<T>& t, const QuantSpec& spec) {
  const T u = detail::compress(v, t);
  const T vq = lattice_quantize(u, static_cast<T>(spec.scale()), spec.rounding);
  return detail::expand(vq, t);
}

// Shared clip/sign wrapper of the uniform and LCQ quantizers. `inner` maps the
// clipped magnitude |x|/alpha in [0, 1) to a value in [0, 1].
template <typename T, typename Inner>
T clipped(T x, T alpha, const QuantSpec& spec, Inner&& inner) {
  if (!spec.is_signed && !(x > static_cast<T>(0))) return static_cast<T>(0);
  const T mag = std::abs(x);
  const T out = mag >= alpha ? alpha : alpha * inner(mag / alpha);
  return x < static_cast<T>(0) ? -out : out;
}

}  // namespace detail

// q_b(v) = round(s v) / s. Requires v in [0, 1) and s > 0.
template <typename T>
T uniform_quantize(T v, double scale) {
  LCQ_CHECK(v >= static_cast<T>(0) && v < static_cast<T>(1), ContractViolation,
            "uniform_quantize: input outside [0, 1)");
  LCQ_CHECK(scale > 0.0, ContractViolation, "uniform_quantize: scale must be positive");
  return detail::lattice_quantize(v, static_cast<T>(scale), Rounding::kNearest);
}

// Clipped uniform quantizer Q_U. Unsigned specs map x <= 0 to 0.
template <typename T>
T clip_uniform_quantize(T x, double alpha, const QuantSpec& spec) {
  LCQ_CHECK(alpha > 0.0, ContractViolation, "clip_uniform_quantize: alpha must be positive");
  const T s = static_cast<T>(spec.scale());
  return detail::clipped(x, static_cast<T>(alpha), spec, [&](T v) {
    return detail::lattice_quantize(v, s, spec.rounding);
  });
}

// Companding function g. Requires v in [0, 1).
template <typename T>
T compand(T v, const CompandingState& state, const QuantSpec& spec) {
  LCQ_CHECK(v >= static_cast<T>(0) && v < static_cast<T>(1), ContractViolation,
            "compand: input outside [0, 1)");
  return detail::compand(v, state.table<T>(), spec);
}

// LCQ quantizer without re-quantization.
template <typename T>
T lcq_forward(T x, const CompandingState& state, const QuantSpec& spec) {
  const auto& t = state.table<T>();
  return detail::clipped(x, static_cast<T>(state.alpha()), spec,
                         [&](T v) { return detail::compand(v, t, spec); });
}

// LCQ quantizer followed by re-quantization on the b' lattice.
template <typename T>
T lcq_forward_requant(T x, const CompandingState& state, const QuantSpec& spec) {
  LCQ_CHECK(spec.requantizes(), ContractViolation,
            "lcq_forward_requant: spec has no outer bit-width");
  const auto& t = state.table<T>();
  const T outer = static_cast<T>(spec.outer_scale());
  return detail::clipped(x, static_cast<T>(state.alpha()), spec, [&](T v) {
    return detail::lattice_quantize(detail::compand(v, t, spec), outer, spec.rounding);
  });
}

// Whichever of the two LCQ forms `spec` selects.
template <typename T>
T lcq_quantize(T x, const CompandingState& state, const QuantSpec& spec) {
  return spec.requantizes() ? lcq_forward_requant(x, state, spec) : lcq_forward(x, state, spec);
}

// Index j of the b-bit lattice point a (non-saturated) input rounds to, i.e.
// round(s * f(|x|/alpha)); saturated inputs give s and clipped-away unsigned
// inputs give 0. This is the "encoded low-bit index" of an element.
template <typename T>
std::int64_t lattice_index(T x, const CompandingState& state, const QuantSpec& spec) {
  if (!spec.is_signed && !(x > static_cast<T>(0))) return 0;
  const T alpha = static_cast<T>(state.alpha());
  const T mag = std::abs(x);
  if (mag >= alpha) return lattice_scale(spec.bits, spec.is_signed);
  const T u = detail::compress(mag / alpha, state.table<T>());
  return static_cast<std::int64_t>(round_half_away(static_cast<T>(spec.scale()) * u));
}

// Output magnitude of every lattice index j = 0..s, as a numerator on the
// spec's code lattice: value_j = alpha * codes[j] / code_scale, evaluated with
// exactly the arithmetic of the forward path at precision T. Throws
// ConsistencyError when the quantizer does not produce lattice values (LCQ
// without re-quantization and a non-identity compressor).
struct LevelTable {
  std::vector<std::int64_t> codes;
  double alpha = 1.0;
  std::int64_t code_scale = 1;
};

template <typename T>
LevelTable level_table(const CompandingState& state, const QuantSpec& spec) {
  LCQ_CHECK(spec.rounding == Rounding::kNearest, ContractViolation,
            "level_table: identity rounding has no discrete levels");
  const auto& t = state.table<T>();
  const std::int64_t s = lattice_scale(spec.bits, spec.is_signed);
  const T scale = static_cast<T>(s);
  LevelTable out;
  out.alpha = state.alpha();
  out.code_scale = spec.code_scale();
  const T code_scale = static_cast<T>(out.code_scale);
  out.codes.resize(static_cast<std::size_t>(s) + 1);
  for (std::int64_t j = 0; j <= s; ++j) {
    const T g = detail::expand(static_cast<T>(j) / scale, t);
    const T n = round_half_away(code_scale * g);
    if (!spec.requantizes() && n / code_scale != g) {
      throw ConsistencyError("level_table: companding output is not on the b-bit lattice");
    }
    out.codes[static_cast<std::size_t>(j)] = static_cast<std::int64_t>(n);
  }
  return out;
}

// Every distinct output of the quantizer, ascending. Unsigned: magnitudes from
// 0 to alpha; signed: the symmetric set with a single zero.
template <typename T>
std::vector<T> quant_levels(const CompandingState& state, const QuantSpec& spec) {
  const auto& t = state.table<T>();
  const std::int64_t s = lattice_scale(spec.bits, spec.is_signed);
  const T scale = static_cast<T>(s);
  const T alpha = static_cast<T>(state.alpha());
  std::vector<T> mags;
  mags.reserve(static_cast<std::size_t>(s) + 2);
  for (std::int64_t j = 0; j <= s; ++j) {
    T g = detail::expand(static_cast<T>(j) / scale, t);
    if (spec.requantizes()) {
      g = detail::lattice_quantize(g, static_cast<T>(spec.outer_scale()), Rounding::kNearest);
    }
    mags.push_back(alpha * g);
  }
  mags.push_back(alpha);  // saturation
  std::sort(mags.begin(), mags.end());
  mags.erase(std::unique(mags.begin(), mags.end()), mags.end());
  if (!spec.is_signed) return mags;
  std::vector<T> out;
  out.reserve(2 * mags.size() - 1);
  for (auto it = mags.rbegin(); it != mags.rend(); ++it) {
    if (*it != static_cast<T>(0)) out.push_back(-*it);
  }
  out.insert(out.end(), mags.begin(), mags.end());
  return out;
}

}  // namespace lcq

#endif  // LCQ_QUANTIZER_HPP_

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

#ifndef LCQ_LUT_HPP_
#define LCQ_LUT_HPP_

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lcq/quantizer.hpp"
#include "lcq/tensor.hpp"
#include "lcq/weight_norm.hpp"

// Lookup-table inference. A layer's weights and activations are stored as
// low-bit lattice indices; every product of a non-zero weight level and a
// non-zero activation level is precomputed as an integer (the product of the
// two numerators on their output lattices). Convolution then reduces to
// integer accumulation of table entries followed by one scalar rescale
// alpha_w * alpha_a * sigma_w / (s'_w * s'_a).

namespace lcq {

// (2^(b_w-1) - 1)(2^b_a - 1): positive weight magnitudes times non-zero
// activation levels.
std::int64_t lut_element_count(int bits_w, int bits_a);

// (b'_w + b'_a) * m / 8.
double lut_memory_bytes(int bits_w, int bits_a, int outer_bits_w, int outer_bits_a);

struct Lut {
  int bits_w = 0;
  int bits_a = 0;
  int outer_bits_w = 0;  // bit-width of the weight code lattice
  int outer_bits_a = 0;
  int m_w = 0;
  int m_a = 0;
  std::vector<std::int32_t> entries;  // m_w x m_a, row-major
  double rescale = 1.0;

  std::int32_t at(int iw, int ia) const { return entries[static_cast<std::size_t>(iw) * m_a + ia]; }
  std::int64_t element_count() const { return static_cast<std::int64_t>(m_w) * m_a; }
  int entry_bits() const { return outer_bits_w + outer_bits_a; }
  double memory_bytes() const { return entry_bits() * static_cast<double>(element_count()) / 8.0; }

  friend bool operator==(const Lut&, const Lut&) = default;
};

// Builds the table from the weight and activation level tables. Throws
// ConsistencyError when a code is off its lattice or entries would not fit
// the entry bit-width.
Lut build_lut(const LevelTable& weights, const QuantSpec& weight_spec, const LevelTable& acts,
              const QuantSpec& act_spec, double sigma_w);

// Little-endian binary format:
//   "LCQL" u16 version=1
//   u8 b_w, u8 b_a, u8 b'_w, u8 b'_a, u32 m_w, u32 m_a
//   i32 entries[m_w * m_a] (row-major), f64 rescale
void write_lut(std::ostream& os, const Lut& lut);
Lut read_lut(std::istream& is);
void save_lut(const std::string& path, const Lut& lut);
Lut load_lut(const std::string& path);

// Encoded low-bit indices of a quantized tensor. For element i, nonzero[i]
// says whether it is a non-zero level; when it is, codes[i] in [0, m) selects
// the LUT row/column (lattice index j - 1) and negative[i] carries the sign.
struct EncodedTensor {
  Shape shape;
  int m = 0;
  bool is_signed = false;
  std::vector<std::uint16_t> codes;
  std::vector<std::uint8_t> nonzero;
  std::vector<std::uint8_t> negative;

  std::size_t numel() const { return codes.size(); }
  friend bool operator==(const EncodedTensor&, const EncodedTensor&) = default;
};

// Encodes x (already standardized for weights) with the same arithmetic as
// the forward quantizer.
template <typename T>
EncodedTensor encode_tensor(const BasicTensor<T>& x, const CompandingState& state,
                            const QuantSpec& spec, QuantizerKind kind) {
  EncodedTensor e;
  e.shape = x.shape();
  e.is_signed = spec.is_signed;
  e.m = static_cast<int>(lattice_scale(spec.bits, spec.is_signed));
  e.codes.resize(x.numel());
  e.nonzero.resize(x.numel());
  e.negative.assign(spec.is_signed ? x.numel() : 0, 0);
  const CompandingState uniform = CompandingState::identity(1, state.alpha());
  const CompandingState& st = kind == QuantizerKind::kUniform ? uniform : state;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const std::int64_t j = lattice_index(x[i], st, spec);
    e.nonzero[i] = j > 0;
    e.codes[i] = static_cast<std::uint16_t>(j > 0 ? j - 1 : 0);
    if (spec.is_signed) e.negative[i] = x[i] < T{0};
  }
  return e;
}

// Dequantized values: sign * scale * alpha * codes[j] / code_scale. `scale`
// is sigma_w for LWN weights and 1 otherwise.
template <typename T>
BasicTensor<T> decode_tensor(const EncodedTensor& e, const LevelTable& levels, double scale = 1.0) {
  BasicTensor<T> out(e.shape);
  const T alpha = static_cast<T>(levels.alpha);
  const T cs = static_cast<T>(levels.code_scale);
  const T sc = static_cast<T>(scale);
  for (std::size_t i = 0; i < e.numel(); ++i) {
    if (!e.nonzero[i]) continue;
    LCQ_CHECK(e.codes[i] < e.m, ContractViolation, "decode_tensor: code out of range");
    const T n = static_cast<T>(levels.codes[e.codes[i] + 1u]);
    const T v = sc * (alpha * (n / cs));
    out[i] = (e.is_signed && e.negative[i]) ? -v : v;
  }
  return out;
}

// Convolution geometry; fully-connected layers are 1x1 convolutions over a
// (N, features, 1, 1) input.
struct ConvGeometry {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

// Integer convolution of encoded activations (N, C, H, W) with encoded
// weights (O, C, k, k): int32 accumulation of table entries, zeros skipped,
// sign from the weight sign bits, then one multiply by lut.rescale.
// Throws on out-of-range codes, geometry mismatch or a possible accumulator
// overflow.
template <typename T>
BasicTensor<T> lut_infer_layer(const EncodedTensor& w, const EncodedTensor& a, const Lut& lut,
                               const ConvGeometry& g);

// Accumulator bound check: fan_in * max|entry| must fit in int32.
void check_accumulator_bound(const Lut& lut, std::int64_t fan_in);

// Encoded-model file: one block per quantized layer holding the weight
// quantizer record, the weight codes and the sign bits.
//   "LCQE" u16 version=1, u32 layer_count
//   per layer: u32 len + record line, u32 rank + u32 dims[rank],
//              u16 codes[n], packed nonzero bits[ceil(n/8)], packed sign bits[ceil(n/8)]
struct EncodedLayer {
  std::string record_line;
  EncodedTensor weights;
  friend bool operator==(const EncodedLayer&, const EncodedLayer&) = default;
};
void save_encoded_model(const std::string& path, const std::vector<EncodedLayer>& layers);
std::vector<EncodedLayer> load_encoded_model(const std::string& path);

}  // namespace lcq

#endif  // LCQ_LUT_HPP_

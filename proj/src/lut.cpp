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

#include "lcq/lut.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "lcq/binary_io.hpp"
#include "lcq/quantizer_record.hpp"

namespace lcq {

std::int64_t lut_element_count(int bits_w, int bits_a) {
  LCQ_CHECK(bits_w >= 2 && bits_a >= 1, ContractViolation, "lut_element_count: bad bit-width");
  return lattice_scale(bits_w, true) * lattice_scale(bits_a, false);
}

double lut_memory_bytes(int bits_w, int bits_a, int outer_bits_w, int outer_bits_a) {
  LCQ_CHECK(outer_bits_w > 0 && outer_bits_a > 0, ContractViolation,
            "lut_memory_bytes: bad outer bit-width");
  return static_cast<double>(outer_bits_w + outer_bits_a) *
         static_cast<double>(lut_element_count(bits_w, bits_a)) / 8.0;
}

Lut build_lut(const LevelTable& weights, const QuantSpec& weight_spec, const LevelTable& acts,
              const QuantSpec& act_spec, double sigma_w) {
  LCQ_CHECK(weight_spec.is_signed && !act_spec.is_signed, ContractViolation,
            "build_lut: expects signed weights and unsigned activations");
  Lut lut;
  lut.bits_w = weight_spec.bits;
  lut.bits_a = act_spec.bits;
  lut.outer_bits_w = weight_spec.code_bits();
  lut.outer_bits_a = act_spec.code_bits();
  lut.m_w = static_cast<int>(lattice_scale(weight_spec.bits, true));
  lut.m_a = static_cast<int>(lattice_scale(act_spec.bits, false));
  LCQ_CHECK(weights.codes.size() == static_cast<std::size_t>(lut.m_w) + 1 &&
                acts.codes.size() == static_cast<std::size_t>(lut.m_a) + 1,
            ConsistencyError, "build_lut: level table size does not match bit-width");
  LCQ_CHECK(weights.code_scale == weight_spec.code_scale() &&
                acts.code_scale == act_spec.code_scale(),
            ConsistencyError, "build_lut: level table lattice does not match spec");
  auto check_codes = [](const LevelTable& t) {
    for (std::int64_t c : t.codes) {
      LCQ_CHECK(c >= 0 && c <= t.code_scale, ConsistencyError,
                "build_lut: level outside its output lattice");
    }
  };
  check_codes(weights);
  check_codes(acts);

  const std::int64_t entry_limit = std::int64_t{1} << lut.entry_bits();
  lut.entries.resize(static_cast<std::size_t>(lut.element_count()));
  for (int iw = 0; iw < lut.m_w; ++iw) {
    for (int ia = 0; ia < lut.m_a; ++ia) {
      const std::int64_t e = weights.codes[iw + 1] * acts.codes[ia + 1];
      LCQ_CHECK(e < entry_limit, ConsistencyError, "build_lut: entry exceeds its bit-width");
      lut.entries[static_cast<std::size_t>(iw) * lut.m_a + ia] = static_cast<std::int32_t>(e);
    }
  }
  lut.rescale = weights.alpha * acts.alpha * sigma_w /
                (static_cast<double>(weights.code_scale) * static_cast<double>(acts.code_scale));
  return lut;
}

void check_accumulator_bound(const Lut& lut, std::int64_t fan_in) {
  std::int64_t peak = 0;
  for (std::int32_t e : lut.entries) peak = std::max<std::int64_t>(peak, e);
  LCQ_CHECK(peak * fan_in <= std::numeric_limits<std::int32_t>::max(), ContractViolation,
            "lut_infer_layer: int32 accumulator could overflow for fan-in " +
                std::to_string(fan_in));
}

template <typename T>
BasicTensor<T> lut_infer_layer(const EncodedTensor& w, const EncodedTensor& a, const Lut& lut,
                               const ConvGeometry& g) {
  LCQ_CHECK(w.shape.size() == 4 && a.shape.size() == 4, ShapeMismatch,
            "lut_infer_layer: expects rank-4 weights and activations");
  LCQ_CHECK(w.shape[0] == g.out_channels && w.shape[1] == g.in_channels &&
                w.shape[2] == g.kernel && w.shape[3] == g.kernel,
            ShapeMismatch, "lut_infer_layer: weight shape does not match geometry");
  LCQ_CHECK(a.shape[1] == g.in_channels, ShapeMismatch,
            "lut_infer_layer: activation channels do not match geometry");
  LCQ_CHECK(w.is_signed && !a.is_signed, ContractViolation,
            "lut_infer_layer: expects signed weights and unsigned activations");
  LCQ_CHECK(w.m == lut.m_w && a.m == lut.m_a, ContractViolation,
            "lut_infer_layer: encodings do not match the table");
  auto check_range = [](const EncodedTensor& e) {
    for (std::size_t i = 0; i < e.numel(); ++i) {
      LCQ_CHECK(!e.nonzero[i] || e.codes[i] < e.m, ContractViolation,
                "lut_infer_layer: code out of range");
    }
  };
  check_range(w);
  check_range(a);
  check_accumulator_bound(lut, static_cast<std::int64_t>(g.in_channels) * g.kernel * g.kernel);

  const int N = a.shape[0], C = a.shape[1], H = a.shape[2], W = a.shape[3];
  const int OH = g.out_size(H), OW = g.out_size(W), K = g.kernel;
  BasicTensor<T> out({N, g.out_channels, OH, OW});
  const T rescale = static_cast<T>(lut.rescale);
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < g.out_channels; ++o) {
      for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow) {
          std::int32_t acc = 0;
          for (int c = 0; c < C; ++c) {
            for (int ky = 0; ky < K; ++ky) {
              const int ih = oh * g.stride - g.pad + ky;
              if (ih < 0 || ih >= H) continue;
              for (int kx = 0; kx < K; ++kx) {
                const int iw = ow * g.stride - g.pad + kx;
                if (iw < 0 || iw >= W) continue;
                const std::size_t wi = ((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx;
                const std::size_t ai = ((static_cast<std::size_t>(n) * C + c) * H + ih) * W + iw;
                if (!w.nonzero[wi] || !a.nonzero[ai]) continue;
                const std::int32_t e = lut.at(w.codes[wi], a.codes[ai]);
                acc += w.negative[wi] ? -e : e;
              }
            }
          }
          out.at4(n, o, oh, ow) = rescale * static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

template BasicTensor<float> lut_infer_layer<float>(const EncodedTensor&, const EncodedTensor&,
                                                   const Lut&, const ConvGeometry&);
template BasicTensor<double> lut_infer_layer<double>(const EncodedTensor&, const EncodedTensor&,
                                                     const Lut&, const ConvGeometry&);

namespace {
constexpr char kLutMagic[4] = {'L', 'C', 'Q', 'L'};
constexpr char kEncMagic[4] = {'L', 'C', 'Q', 'E'};
constexpr std::uint16_t kVersion = 1;

std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& bits, std::size_t n) {
  std::vector<std::uint8_t> out((n + 7) / 8, 0);
  for (std::size_t i = 0; i < n && i < bits.size(); ++i) {
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& packed, std::size_t n) {
  std::vector<std::uint8_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) out[i] = (packed[i / 8] >> (i % 8)) & 1u;
  return out;
}
}  // namespace

void write_lut(std::ostream& os, const Lut& lut) {
  BinaryWriter w(os);
  w.bytes(kLutMagic, 4);
  w.u16(kVersion);
  w.u8(static_cast<std::uint8_t>(lut.bits_w));
  w.u8(static_cast<std::uint8_t>(lut.bits_a));
  w.u8(static_cast<std::uint8_t>(lut.outer_bits_w));
  w.u8(static_cast<std::uint8_t>(lut.outer_bits_a));
  w.u32(static_cast<std::uint32_t>(lut.m_w));
  w.u32(static_cast<std::uint32_t>(lut.m_a));
  for (std::int32_t e : lut.entries) w.i32(e);
  w.f64(lut.rescale);
}

Lut read_lut(std::istream& is) {
  BinaryReader r(is, "LUT file");
  r.expect_magic(kLutMagic);
  const std::uint16_t version = r.u16();
  if (version != kVersion) throw FormatError("LUT file: unsupported version " + std::to_string(version));
  Lut lut;
  lut.bits_w = r.u8();
  lut.bits_a = r.u8();
  lut.outer_bits_w = r.u8();
  lut.outer_bits_a = r.u8();
  lut.m_w = static_cast<int>(r.u32());
  lut.m_a = static_cast<int>(r.u32());
  if (lut.m_w != lattice_scale(lut.bits_w, true) || lut.m_a != lattice_scale(lut.bits_a, false)) {
    throw FormatError("LUT file: table size does not match bit-widths");
  }
  lut.entries.resize(static_cast<std::size_t>(lut.element_count()));
  for (std::int32_t& e : lut.entries) e = r.i32();
  lut.rescale = r.f64();
  return lut;
}

void save_lut(const std::string& path, const Lut& lut) {
  std::ofstream os(path, std::ios::binary);
  LCQ_CHECK(os.good(), FormatError, "cannot open " + path + " for writing");
  write_lut(os, lut);
}

Lut load_lut(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  LCQ_CHECK(is.good(), FormatError, "cannot open " + path);
  return read_lut(is);
}

void save_encoded_model(const std::string& path, const std::vector<EncodedLayer>& layers) {
  std::ofstream os(path, std::ios::binary);
  LCQ_CHECK(os.good(), FormatError, "cannot open " + path + " for writing");
  BinaryWriter w(os);
  w.bytes(kEncMagic, 4);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    const EncodedTensor& e = layer.weights;
    w.string(layer.record_line);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    for (std::uint16_t c : e.codes) w.u16(c);
    const auto nz = pack_bits(e.nonzero, e.numel());
    const auto sg = pack_bits(e.negative, e.numel());
    w.bytes(nz.data(), nz.size());
    w.bytes(sg.data(), sg.size());
  }
}

std::vector<EncodedLayer> load_encoded_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  LCQ_CHECK(is.good(), FormatError, "cannot open " + path);
  BinaryReader r(is, "encoded model");
  r.expect_magic(kEncMagic);
  const std::uint16_t version = r.u16();
  if (version != kVersion) throw FormatError("encoded model: unsupported version");
  const std::uint32_t count = r.u32();
  std::vector<EncodedLayer> layers(count);
  for (auto& layer : layers) {
    layer.record_line = r.string();
    const auto rec = QuantizerRecord::parse(layer.record_line);
    EncodedTensor& e = layer.weights;
    e.is_signed = true;
    e.m = static_cast<int>(lattice_scale(rec.bits, true));
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("encoded model: bad rank");
    e.shape.resize(rank);
    for (int& d : e.shape) d = static_cast<int>(r.u32());
    const std::size_t n = shape_numel(e.shape);
    e.codes.resize(n);
    for (auto& c : e.codes) c = r.u16();
    std::vector<std::uint8_t> nz((n + 7) / 8), sg((n + 7) / 8);
    r.bytes(nz.data(), nz.size());
    r.bytes(sg.data(), sg.size());
    e.nonzero = unpack_bits(nz, n);
    e.negative = unpack_bits(sg, n);
  }
  return layers;
}

}  // namespace lcq

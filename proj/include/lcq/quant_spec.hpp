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

#ifndef LCQ_QUANT_SPEC_HPP_
#define LCQ_QUANT_SPEC_HPP_

#include <cstdint>
#include <string>

namespace lcq {

// kIdentity replaces every rounding step with the identity map. It is a
// debugging aid: the quantizer then reproduces its input inside the clip
// range, and the hand-derived parameter gradients must vanish.
enum class Rounding : std::uint8_t { kNearest, kIdentity };

// Number of lattice steps on [0, 1] for a b-bit quantizer.
constexpr std::int64_t lattice_scale(int bits, bool is_signed) {
  return is_signed ? (std::int64_t{1} << (bits - 1)) - 1 : (std::int64_t{1} << bits) - 1;
}

// Static configuration of one quantizer.
//
// `outer_bits == 0` means no re-quantization after companding; otherwise the
// companding output is re-quantized on the finer b' lattice and
// outer_bits > bits holds.
struct QuantSpec {
  int bits = 2;
  bool is_signed = false;
  int outer_bits = 0;
  int intervals = 16;
  Rounding rounding = Rounding::kNearest;

  // Validates and returns a spec; throws ContractViolation on bad fields.
  static QuantSpec make(int bits, bool is_signed, int outer_bits = 0, int intervals = 16);

  double scale() const { return static_cast<double>(lattice_scale(bits, is_signed)); }
  double outer_scale() const {
    return static_cast<double>(lattice_scale(outer_bits, is_signed));
  }
  bool requantizes() const { return outer_bits > 0; }

  // Integer lattice the final outputs live on: s' when re-quantizing, s otherwise.
  std::int64_t code_scale() const {
    return lattice_scale(requantizes() ? outer_bits : bits, is_signed);
  }
  int code_bits() const { return requantizes() ? outer_bits : bits; }

  void validate() const;
  std::string to_string() const;

  friend bool operator==(const QuantSpec&, const QuantSpec&) = default;
};

// Copy of `spec` with rounding swapped for the identity.
QuantSpec with_identity_rounding(QuantSpec spec);

}  // namespace lcq

#endif  // LCQ_QUANT_SPEC_HPP_

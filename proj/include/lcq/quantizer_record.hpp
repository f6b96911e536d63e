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

#ifndef LCQ_QUANTIZER_RECORD_HPP_
#define LCQ_QUANTIZER_RECORD_HPP_

#include <string>
#include <vector>

#include "lcq/companding.hpp"
#include "lcq/quant_spec.hpp"
#include "lcq/quantizer_grad.hpp"

namespace lcq {

// One quantizer as a single text line:
//
//   <layer-id> <weight|activation> <b> <b'> <K> <alpha> <theta_1> ... <theta_K>
//
// b' = 0 means no re-quantization. Reals are printed with 17 significant
// digits so that parsing restores them exactly. Weight quantizers are signed,
// activation quantizers unsigned.
struct QuantizerRecord {
  std::string layer_id;
  QuantRole role = QuantRole::kActivation;
  int bits = 2;
  int outer_bits = 0;
  double alpha = 1.0;
  std::vector<double> theta;

  QuantSpec spec() const;
  CompandingState state() const;

  std::string to_line() const;
  // Throws FormatError on malformed lines.
  static QuantizerRecord parse(const std::string& line);

  friend bool operator==(const QuantizerRecord&, const QuantizerRecord&) = default;
};

const char* role_name(QuantRole role);

}  // namespace lcq

#endif  // LCQ_QUANTIZER_RECORD_HPP_

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

#include "lcq/quantizer_record.hpp"

#include <fmt/format.h>

#include <sstream>

namespace lcq {

const char* role_name(QuantRole role) {
  return role == QuantRole::kWeight ? "weight" : "activation";
}

QuantSpec QuantizerRecord::spec() const {
  return QuantSpec::make(bits, role == QuantRole::kWeight, outer_bits,
                         static_cast<int>(theta.size()));
}

CompandingState QuantizerRecord::state() const { return CompandingState::derive(theta, alpha); }

std::string QuantizerRecord::to_line() const {
  std::string out = fmt::format("{} {} {} {} {} {:.17g}", layer_id, role_name(role), bits,
                                outer_bits, theta.size(), alpha);
  for (double t : theta) out += fmt::format(" {:.17g}", t);
  return out;
}

QuantizerRecord QuantizerRecord::parse(const std::string& line) {
  std::istringstream is(line);
  QuantizerRecord r;
  std::string role;
  std::size_t k = 0;
  if (!(is >> r.layer_id >> role >> r.bits >> r.outer_bits >> k >> r.alpha)) {
    throw FormatError("quantizer record: malformed header in '" + line + "'");
  }
  if (role == "weight") {
    r.role = QuantRole::kWeight;
  } else if (role == "activation") {
    r.role = QuantRole::kActivation;
  } else {
    throw FormatError("quantizer record: unknown role '" + role + "'");
  }
  if (k == 0 || k > 4096) throw FormatError("quantizer record: bad interval count");
  r.theta.resize(k);
  for (double& t : r.theta) {
    if (!(is >> t)) throw FormatError("quantizer record: expected " + std::to_string(k) + " thetas");
  }
  std::string extra;
  if (is >> extra) throw FormatError("quantizer record: trailing data '" + extra + "'");
  return r;
}

}  // namespace lcq

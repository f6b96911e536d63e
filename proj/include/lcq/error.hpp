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

#ifndef LCQ_ERROR_HPP_
#define LCQ_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace lcq {

// A caller broke a documented precondition (argument out of domain, bad
// bit-width, non-positive clip value, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Learnable parameters became non-finite.
class ParameterCorruption : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated file, or a file with an unsupported version.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An internal cross-check failed (e.g. a level that should lie on an integer
// lattice does not).
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

#define LCQ_CHECK(cond, ExcType, msg)            \
  do {                                           \
    if (!(cond)) throw ExcType(std::string(msg)); \
  } while (0)

}  // namespace lcq

#endif  // LCQ_ERROR_HPP_

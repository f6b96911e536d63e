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

#ifndef LCQ_BINARY_IO_HPP_
#define LCQ_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "lcq/error.hpp"

namespace lcq {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; add byte swapping for this target");

// Little-endian primitive writer over an ostream.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    LCQ_CHECK(os_.good(), FormatError, "write failed");
  }
  template <typename V>
  void pod(V v) {
    bytes(&v, sizeof(V));
  }
  void u8(std::uint8_t v) { pod(v); }
  void u16(std::uint16_t v) { pod(v); }
  void u32(std::uint32_t v) { pod(v); }
  void u64(std::uint64_t v) { pod(v); }
  void i32(std::int32_t v) { pod(v); }
  void f32(float v) { pod(v); }
  void f64(double v) { pod(v); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ostream& os_;
};

// Reader counterpart; throws FormatError on truncation.
class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    LCQ_CHECK(static_cast<std::size_t>(is_.gcount()) == n, FormatError, what_ + ": truncated");
  }
  template <typename V>
  V pod() {
    V v;
    bytes(&v, sizeof(V));
    return v;
  }
  std::uint8_t u8() { return pod<std::uint8_t>(); }
  std::uint16_t u16() { return pod<std::uint16_t>(); }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int32_t i32() { return pod<std::int32_t>(); }
  float f32() { return pod<float>(); }
  double f64() { return pod<double>(); }
  std::string string(std::size_t max_len = 1u << 24) {
    const std::uint32_t n = u32();
    LCQ_CHECK(n <= max_len, FormatError, what_ + ": string too long");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void expect_magic(const char* magic) {  // first 4 chars
    char got[4];
    bytes(got, 4);
    LCQ_CHECK(std::memcmp(got, magic, 4) == 0, FormatError, what_ + ": bad magic");
  }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace lcq

#endif  // LCQ_BINARY_IO_HPP_

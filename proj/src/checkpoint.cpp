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

#include "lcq/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "lcq/binary_io.hpp"

namespace lcq {
namespace {

constexpr char kMagic[] = "LCQC";
constexpr std::uint16_t kVersion = 1;
constexpr std::uint32_t kMaxHeader = 64u << 20;

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json h;
  h["epoch"] = ck.epoch;
  h["step"] = ck.step;
  h["config"] = ck.config;
  h["quantizers"] = ck.quantizer_records;
  h["quantizer_kinds"] = ck.quantizer_kinds;
  h["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : ck.tensors) {
    h["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
    BinaryWriter w(os);
    w.bytes(kMagic, 4);
    w.u16(kVersion);
    w.string(h.dump());
    for (const auto& [name, t] : ck.tensors) w.bytes(t.data(), t.numel() * sizeof(float));
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot move checkpoint into place at " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  BinaryReader r(is, path);
  r.expect_magic(kMagic);
  const std::uint16_t version = r.u16();
  LCQ_CHECK(version == kVersion, FormatError,
            path + ": unsupported checkpoint version " + std::to_string(version));
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.string(kMaxHeader));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad checkpoint header: " + e.what());
  }
  Checkpoint ck;
  try {
    ck.epoch = h.at("epoch").get<int>();
    ck.step = h.value("step", std::int64_t{0});
    ck.config = h.at("config").get<std::map<std::string, std::string>>();
    ck.quantizer_records = h.at("quantizers").get<std::vector<std::string>>();
    ck.quantizer_kinds = h.value("quantizer_kinds", std::map<std::string, std::string>{});
    for (const auto& e : h.at("tensors")) {
      Shape shape = e.at("shape").get<Shape>();
      for (int d : shape) LCQ_CHECK(d >= 0 && d < (1 << 28), FormatError, path + ": bad shape");
      Tensor t(shape);
      ck.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad checkpoint header: " + e.what());
  }
  for (auto& [name, t] : ck.tensors) r.bytes(t.data(), t.numel() * sizeof(float));
  return ck;
}

}  // namespace lcq

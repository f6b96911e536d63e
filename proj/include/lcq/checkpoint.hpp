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

#ifndef LCQ_CHECKPOINT_HPP_
#define LCQ_CHECKPOINT_HPP_

#include <map>
#include <string>
#include <vector>

#include "lcq/nn/model.hpp"
#include "lcq/tensor.hpp"

namespace lcq {

// Named-tensor archive.
//   "LCQC" u16 version=1
//   u32 len + JSON header:
//     {"epoch": int, "config": {key: value}, "quantizers": [record lines],
//      "quantizer_kinds": {quantizer name: "companding"|"uniform"},
//      "tensors": [{"name": str, "shape": [int]}]}
//   tensor payloads in header order: f32 little-endian, row-major
// Tensor names: parameters and buffers by layer path ("conv1.weight",
// "bn1.running_mean", "conv2.aq.theta"); optimizer velocities as
// "opt.<parameter name>".
struct Checkpoint {
  int epoch = 0;
  std::int64_t step = 0;
  std::map<std::string, std::string> config;
  std::vector<std::string> quantizer_records;
  std::map<std::string, std::string> quantizer_kinds;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Parameters, buffers and quantizer records of `model`.
template <typename T>
Checkpoint capture_model(nn::Layer<T>& model) {
  Checkpoint ck;
  std::vector<nn::Parameter<T>> ps;
  model.collect_params(ps);
  for (auto& p : ps) ck.tensors.emplace_back(p.name, p.value->template cast<float>());
  std::vector<nn::Buffer<T>> bs;
  model.collect_buffers(bs);
  for (auto& b : bs) ck.tensors.emplace_back(b.name, b.value->template cast<float>());
  for (auto* q : nn::quant_layers(model)) {
    for (auto* u : {&q->weight_quantizer(), &q->act_quantizer()}) {
      if (!u->enabled()) continue;
      u->refresh();
      ck.quantizer_records.push_back(u->record(q->name()).to_line());
      ck.quantizer_kinds[u->name()] =
          u->kind() == QuantizerKind::kUniform ? "uniform" : "companding";
    }
  }
  return ck;
}

// Copies tensors into the model by name. strict: every parameter and buffer
// must be present with a matching shape. Otherwise tensors absent from the
// checkpoint keep their current values (used to start a quantized run from a
// full-precision checkpoint). Returns the number of tensors loaded.
template <typename T>
int restore_model(nn::Layer<T>& model, const Checkpoint& ck, bool strict) {
  int loaded = 0;
  auto load = [&](const std::string& name, BasicTensor<T>& dst) {
    const Tensor* src = ck.find(name);
    if (!src) {
      LCQ_CHECK(!strict, FormatError, "checkpoint is missing tensor '" + name + "'");
      return;
    }
    LCQ_CHECK(src->shape() == dst.shape(), ShapeMismatch,
              "checkpoint tensor '" + name + "' has shape " + shape_string(src->shape()) +
                  ", model expects " + shape_string(dst.shape()));
    dst = src->template cast<T>();
    ++loaded;
  };
  std::vector<nn::Parameter<T>> ps;
  model.collect_params(ps);
  for (auto& p : ps) load(p.name, *p.value);
  std::vector<nn::Buffer<T>> bs;
  model.collect_buffers(bs);
  for (auto& b : bs) load(b.name, *b.value);
  for (auto* q : nn::quant_layers(model)) {
    q->weight_quantizer().refresh();
    q->act_quantizer().refresh();
  }
  return loaded;
}

}  // namespace lcq

#endif  // LCQ_CHECKPOINT_HPP_

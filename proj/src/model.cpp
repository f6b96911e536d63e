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

#include "lcq/nn/model.hpp"

namespace lcq::nn {

const char* method_name(Method m) {
  switch (m) {
    case Method::kLcq:
      return "lcq";
    case Method::kUniform:
      return "uniform";
    case Method::kLcqNoLwn:
      return "lcq-no-lwn";
    case Method::kFloat:
      return "fp";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "lcq") return Method::kLcq;
  if (s == "uniform") return Method::kUniform;
  if (s == "lcq-no-lwn") return Method::kLcqNoLwn;
  if (s == "fp") return Method::kFloat;
  throw ContractViolation("unknown method '" + s + "' (lcq, uniform, lcq-no-lwn, fp)");
}

QuantConvOptions plan_layer(const QuantPlan& plan, const ConvGeometry& g, bool edge, bool bias) {
  QuantConvOptions o;
  o.geometry = g;
  o.bias = bias;
  o.weight_norm =
      plan.method == Method::kLcqNoLwn ? WeightNorm::kStandardizeOnly : WeightNorm::kLimited;

  const bool quantized = plan.method != Method::kFloat;
  const int bw = edge ? plan.edge_bits : plan.weight_bits;
  const int ba = edge ? plan.edge_bits : plan.act_bits;
  const bool uniform_only = edge || plan.method == Method::kUniform;

  auto make = [&](int bits, bool is_signed, bool uniform, double alpha) {
    QuantizerOptions q;
    q.enabled = quantized;
    q.kind = uniform ? QuantizerKind::kUniform : QuantizerKind::kCompanding;
    // b' equal to b means no re-quantization.
    const int outer = uniform || plan.outer_bits == bits ? 0 : plan.outer_bits;
    q.spec = QuantSpec::make(bits, is_signed, outer, uniform ? 1 : plan.intervals);
    q.alpha_init = alpha;
    q.jacobian = plan.jacobian;
    return q;
  };
  o.weight_quant = make(bw, true, uniform_only || bw == 2, plan.alpha_w_init);
  o.act_quant = make(ba, false, uniform_only, plan.alpha_a_init);
  return o;
}

template <typename T>
std::unique_ptr<Sequential<T>> build_model(const ModelConfig& mc, const QuantPlan& plan) {
  auto m = std::make_unique<Sequential<T>>(mc.arch);
  if (mc.arch == "mnist_cnn") {
    LCQ_CHECK(mc.image_size == 28, ContractViolation, "mnist_cnn expects 28x28 input");
    m->template add<QuantConv<T>>(
        "conv1", plan_layer(plan, ConvGeometry{mc.in_channels, 16, 5, 1, 2}, true, false));
    m->template add<AvgPool<T>>("pool1", 2);
    m->template add<BatchNorm<T>>("bn1", 16);
    m->template add<QuantConv<T>>("conv2",
                                  plan_layer(plan, ConvGeometry{16, 32, 3, 1, 1}, false, false));
    m->template add<AvgPool<T>>("pool2", 2);
    m->template add<BatchNorm<T>>("bn2", 32);
    m->template add<QuantConv<T>>("conv3",
                                  plan_layer(plan, ConvGeometry{32, 32, 3, 1, 1}, false, false));
    m->template add<BatchNorm<T>>("bn3", 32);
    m->template add<Flatten<T>>("flatten");
    m->template add<QuantConv<T>>(
        "fc", plan_layer(plan, ConvGeometry{32 * 7 * 7, mc.classes, 1, 1, 0}, true, true));
  } else if (mc.arch == "toy") {
    const int s = mc.image_size;
    m->template add<QuantConv<T>>(
        "conv1", plan_layer(plan, ConvGeometry{mc.in_channels, 4, 3, 1, 1}, false, false));
    m->template add<BatchNorm<T>>("bn1", 4);
    m->template add<QuantConv<T>>("conv2",
                                  plan_layer(plan, ConvGeometry{4, 4, 3, 1, 1}, false, false));
    m->template add<BatchNorm<T>>("bn2", 4);
    m->template add<Flatten<T>>("flatten");
    m->template add<QuantConv<T>>(
        "fc", plan_layer(plan, ConvGeometry{4 * s * s, mc.classes, 1, 1, 0}, false, true));
  } else if (mc.arch == "resnet20") {
    const int w = mc.width;
    m->template add<QuantConv<T>>(
        "conv1", plan_layer(plan, ConvGeometry{mc.in_channels, w, 3, 1, 1}, true, false));
    int in = w;
    for (int stage = 0; stage < 3; ++stage) {
      const int out = w << stage;
      for (int b = 0; b < 3; ++b) {
        const int stride = (stage > 0 && b == 0) ? 2 : 1;
        m->template add<ResidualBlock<T>>(
            "s" + std::to_string(stage + 1) + "b" + std::to_string(b + 1), in, out, stride, plan);
        in = out;
      }
    }
    m->template add<BatchNorm<T>>("bn_final", in);
    m->template add<ReLU<T>>("relu_final");
    m->template add<GlobalAvgPool<T>>("gap");
    m->template add<QuantConv<T>>("fc",
                                  plan_layer(plan, ConvGeometry{in, mc.classes, 1, 1, 0}, true, true));
  } else {
    throw ContractViolation("unknown architecture '" + mc.arch + "' (mnist_cnn, toy, resnet20)");
  }
  return m;
}

template std::unique_ptr<Sequential<float>> build_model<float>(const ModelConfig&, const QuantPlan&);
template std::unique_ptr<Sequential<double>> build_model<double>(const ModelConfig&,
                                                                 const QuantPlan&);

}  // namespace lcq::nn

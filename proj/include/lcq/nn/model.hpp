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

#ifndef LCQ_NN_MODEL_HPP_
#define LCQ_NN_MODEL_HPP_

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lcq/nn/layers.hpp"
#include "lcq/nn/quant_conv.hpp"

namespace lcq::nn {

// Training method. kUniform keeps the clipped uniform quantizer everywhere
// (theta frozen); kLcqNoLwn replaces limited weight normalization by plain
// standardization; kFloat disables quantization.
enum class Method : std::uint8_t { kLcq, kUniform, kLcqNoLwn, kFloat };

const char* method_name(Method m);
Method parse_method(const std::string& s);  // throws ContractViolation

// How quantized layers are configured. Edge layers (first and last) use
// `edge_bits` for weights and activations with the uniform quantizer.
// 2-bit weights always use the uniform quantizer.
struct QuantPlan {
  Method method = Method::kLcq;
  int weight_bits = 2;
  int act_bits = 2;
  int outer_bits = 8;  // b'; 0 disables re-quantization
  int edge_bits = 8;
  int intervals = 16;  // K
  double alpha_w_init = 3.0;
  double alpha_a_init = 8.0;
  ThetaJacobian jacobian = ThetaJacobian::kDiagonal;
};

// Quantizer options for one layer of the plan.
QuantConvOptions plan_layer(const QuantPlan& plan, const ConvGeometry& g, bool edge, bool bias);

template <typename T>
class Sequential : public Layer<T> {
 public:
  explicit Sequential(std::string name) : Layer<T>(std::move(name)) {}

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) override {
    BasicTensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h, training);
    return h;
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    BasicTensor<T> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }
  BasicTensor<T> infer_lut(const BasicTensor<T>& x) override {
    BasicTensor<T> h = x;
    for (auto& l : layers_) h = l->infer_lut(h);
    return h;
  }
  void collect_params(std::vector<Parameter<T>>& out) override {
    for (auto& l : layers_) l->collect_params(out);
  }
  void collect_buffers(std::vector<Buffer<T>>& out) override {
    for (auto& l : layers_) l->collect_buffers(out);
  }
  void visit(const std::function<void(Layer<T>&)>& fn) override {
    fn(*this);
    for (auto& l : layers_) l->visit(fn);
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// Pre-activation residual block: x + conv2(bn2(conv1(bn1(x)))), activation
// quantizers inside the convolutions. When the shape changes the shortcut
// subsamples spatially and zero-pads channels (parameter free).
template <typename T>
class ResidualBlock : public Layer<T> {
 public:
  ResidualBlock(std::string name, int in_ch, int out_ch, int stride, const QuantPlan& plan)
      : Layer<T>(name), body_(name + ".body"), in_ch_(in_ch), out_ch_(out_ch), stride_(stride) {
    body_.template add<BatchNorm<T>>(name + ".bn1", in_ch);
    body_.template add<QuantConv<T>>(
        name + ".conv1", plan_layer(plan, ConvGeometry{in_ch, out_ch, 3, stride, 1}, false, false));
    body_.template add<BatchNorm<T>>(name + ".bn2", out_ch);
    body_.template add<QuantConv<T>>(
        name + ".conv2", plan_layer(plan, ConvGeometry{out_ch, out_ch, 3, 1, 1}, false, false));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) override {
    BasicTensor<T> y = body_.forward(x, training);
    add_shortcut(x, y);
    return y;
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    BasicTensor<T> dx = body_.backward(dy);
    // Shortcut gradient: adjoint of subsample + channel pad.
    for (int n = 0; n < dx.dim(0); ++n)
      for (int c = 0; c < in_ch_; ++c)
        for (int h = 0; h < dy.dim(2); ++h)
          for (int w = 0; w < dy.dim(3); ++w) dx.at4(n, c, h * stride_, w * stride_) += dy.at4(n, c, h, w);
    return dx;
  }
  BasicTensor<T> infer_lut(const BasicTensor<T>& x) override {
    BasicTensor<T> y = body_.infer_lut(x);
    add_shortcut(x, y);
    return y;
  }
  void collect_params(std::vector<Parameter<T>>& out) override { body_.collect_params(out); }
  void collect_buffers(std::vector<Buffer<T>>& out) override { body_.collect_buffers(out); }
  void visit(const std::function<void(Layer<T>&)>& fn) override {
    fn(*this);
    body_.visit(fn);
  }

 private:
  void add_shortcut(const BasicTensor<T>& x, BasicTensor<T>& y) const {
    for (int n = 0; n < y.dim(0); ++n)
      for (int c = 0; c < in_ch_; ++c)
        for (int h = 0; h < y.dim(2); ++h)
          for (int w = 0; w < y.dim(3); ++w) y.at4(n, c, h, w) += x.at4(n, c, h * stride_, w * stride_);
  }

  Sequential<T> body_;
  int in_ch_, out_ch_, stride_;
};

// Architectures.
//   mnist_cnn: qconv(1->16,5x5) pool BN qconv(16->32,3x3) pool BN
//              qconv(32->32,3x3) BN flatten qfc(->classes), 28x28 input.
//   toy:       qconv(C->4,3x3) BN qconv(4->4,3x3) BN flatten qfc(->classes);
//              small enough for exhaustive finite differences.
//   resnet20:  pre-activation ResNet-20 for 32x32 RGB input.
struct ModelConfig {
  std::string arch = "mnist_cnn";
  int in_channels = 1;
  int image_size = 28;
  int classes = 10;
  int width = 16;
};

template <typename T>
std::unique_ptr<Sequential<T>> build_model(const ModelConfig& mc, const QuantPlan& plan);

// He-normal initialization of convolution weights, zero biases.
template <typename T>
void init_weights(Layer<T>& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  model.visit([&](Layer<T>& l) {
    if (auto* q = dynamic_cast<QuantConv<T>*>(&l)) {
      const auto& g = q->options().geometry;
      const double fan_in = static_cast<double>(g.in_channels) * g.kernel * g.kernel;
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (T& w : q->weight().span()) w = static_cast<T>(dist(rng));
      if (q->has_bias()) q->bias().fill(T{0});
    }
  });
}

template <typename T>
std::vector<QuantConv<T>*> quant_layers(Layer<T>& model) {
  std::vector<QuantConv<T>*> out;
  model.visit([&](Layer<T>& l) {
    if (auto* q = dynamic_cast<QuantConv<T>*>(&l)) out.push_back(q);
  });
  return out;
}

template <typename T>
std::vector<Parameter<T>> parameters(Layer<T>& model) {
  std::vector<Parameter<T>> out;
  model.collect_params(out);
  return out;
}

template <typename T>
void zero_grads(Layer<T>& model) {
  for (auto& p : parameters(model)) p.grad->fill(T{0});
}

// Copies parameters and buffers by name between models of the same
// architecture (possibly different precision).
template <typename Dst, typename Src>
void copy_state(Layer<Dst>& dst, Layer<Src>& src) {
  std::vector<Parameter<Src>> sp;
  src.collect_params(sp);
  std::vector<Parameter<Dst>> dp;
  dst.collect_params(dp);
  LCQ_CHECK(sp.size() == dp.size(), ShapeMismatch, "copy_state: parameter count differs");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    LCQ_CHECK(sp[i].name == dp[i].name && sp[i].value->shape() == dp[i].value->shape(),
              ShapeMismatch, "copy_state: parameter mismatch at " + sp[i].name);
    *dp[i].value = sp[i].value->template cast<Dst>();
  }
  std::vector<Buffer<Src>> sb;
  src.collect_buffers(sb);
  std::vector<Buffer<Dst>> db;
  dst.collect_buffers(db);
  LCQ_CHECK(sb.size() == db.size(), ShapeMismatch, "copy_state: buffer count differs");
  for (std::size_t i = 0; i < sb.size(); ++i) *db[i].value = sb[i].value->template cast<Dst>();
}

}  // namespace lcq::nn

#endif  // LCQ_NN_MODEL_HPP_

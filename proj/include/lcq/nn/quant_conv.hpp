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

#ifndef LCQ_NN_QUANT_CONV_HPP_
#define LCQ_NN_QUANT_CONV_HPP_

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lcq/lut.hpp"
#include "lcq/nn/layers.hpp"
#include "lcq/quantizer_grad.hpp"
#include "lcq/quantizer_record.hpp"
#include "lcq/weight_norm.hpp"

namespace lcq::nn {

// Lower bound applied to a learned clip value before the tables are derived.
inline constexpr double kMinAlpha = 1e-4;

struct QuantizerOptions {
  bool enabled = true;  // false: full precision (ReLU for activations)
  QuantizerKind kind = QuantizerKind::kCompanding;
  QuantSpec spec;
  double alpha_init = 1.0;
  ThetaJacobian jacobian = ThetaJacobian::kDiagonal;
};

// One learnable quantizer: clip value alpha and, for companding quantizers,
// K raw interval weights theta.
//
// Debug hook for gradient checks: after capture_offsets() the forward keeps
// every element's interval pair and rounding residuals fixed, so the output
// becomes a smooth function of x, alpha and theta whose exact derivatives are
// the straight-through gradients. Only meaningful in double precision.
template <typename T>
class QuantizerUnit {
 public:
  QuantizerUnit(std::string name, QuantRole role, QuantizerOptions opt)
      : name_(std::move(name)), role_(role), opt_(std::move(opt)) {
    if (opt_.kind == QuantizerKind::kUniform) {
      LCQ_CHECK(!opt_.spec.requantizes(), ContractViolation,
                name_ + ": uniform quantizers do not re-quantize");
      opt_.spec.intervals = 1;
    }
    opt_.spec.validate();
    LCQ_CHECK(opt_.spec.is_signed == (role == QuantRole::kWeight), ContractViolation,
              name_ + ": weights are signed and activations unsigned");
    theta_ = BasicTensor<T>({opt_.spec.intervals}, T{0});
    grad_theta_ = BasicTensor<T>({opt_.spec.intervals});
    alpha_ = BasicTensor<T>({1}, static_cast<T>(opt_.alpha_init));
    grad_alpha_ = BasicTensor<T>({1});
    refresh();
  }

  const std::string& name() const { return name_; }
  QuantRole role() const { return role_; }
  bool enabled() const { return opt_.enabled; }
  QuantizerKind kind() const { return opt_.kind; }
  const QuantSpec& spec() const { return opt_.spec; }
  const QuantizerOptions& options() const { return opt_; }
  const CompandingState& state() const { return state_; }
  BasicTensor<T>& theta() { return theta_; }
  BasicTensor<T>& alpha() { return alpha_; }

  void set_rounding(Rounding r) {
    opt_.spec.rounding = r;
  }
  void set_jacobian(ThetaJacobian j) { opt_.jacobian = j; }

  // Rebuilds the tables from the current parameters. Throws
  // ParameterCorruption on non-finite values.
  void refresh() {
    const double a = static_cast<double>(alpha_[0]);
    LCQ_CHECK(std::isfinite(a), ParameterCorruption, name_ + ": alpha is not finite");
    if (a < kMinAlpha) alpha_[0] = static_cast<T>(kMinAlpha);
    std::vector<double> th(theta_.vec().begin(), theta_.vec().end());
    state_ = CompandingState::derive(th, static_cast<double>(alpha_[0]));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    refresh();
    BasicTensor<T> y(x.shape());
    if (!opt_.enabled) {
      for (std::size_t i = 0; i < x.numel(); ++i) {
        y[i] = role_ == QuantRole::kActivation && !(x[i] > T{0}) ? T{0} : x[i];
      }
      return y;
    }
    if (frozen_) return frozen_forward(x);
    if (capturing_) capture(x);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      y[i] = quantize_value(x[i], state_, opt_.spec, opt_.kind);
    }
    return y;
  }

  // Accumulates parameter gradients; returns dL/dx. `scale` multiplies the
  // parameter gradients (sigma_w under limited weight normalization).
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
    if (!opt_.enabled) {
      BasicTensor<T> dx = dy;
      if (role_ == QuantRole::kActivation) {
        for (std::size_t i = 0; i < dx.numel(); ++i)
          if (!(x[i] > T{0})) dx[i] = T{0};
      }
      return dx;
    }
    TensorGrads<T> g = accumulate_tensor_grads(x, dy, state_, opt_.spec, role_, opt_.jacobian);
    add_param_grads(g, 1.0);
    return std::move(g.d_input);
  }

  void add_param_grads(const TensorGrads<T>& g, double scale) {
    grad_alpha_[0] += static_cast<T>(scale * g.d_alpha);
    if (opt_.kind == QuantizerKind::kCompanding) {
      for (std::size_t k = 0; k < g.d_theta.size(); ++k) {
        grad_theta_[k] += static_cast<T>(scale * g.d_theta[k]);
      }
    }
  }

  void collect_params(std::vector<Parameter<T>>& out) {
    if (!opt_.enabled) return;
    out.push_back({name_ + ".alpha", &alpha_, &grad_alpha_, ParamGroup::kQuantizer});
    if (opt_.kind == QuantizerKind::kCompanding) {
      out.push_back({name_ + ".theta", &theta_, &grad_theta_, ParamGroup::kQuantizer});
    }
  }

  QuantizerRecord record(const std::string& layer_id) const {
    QuantizerRecord r;
    r.layer_id = layer_id;
    r.role = role_;
    r.bits = opt_.spec.bits;
    r.outer_bits = opt_.spec.outer_bits;
    r.alpha = state_.alpha();
    r.theta.assign(state_.theta_raw().begin(), state_.theta_raw().end());
    return r;
  }

  // Gradient-check hooks (see class comment).
  void capture_offsets() {
    capturing_ = true;
    frozen_ = false;
  }
  void release_offsets() {
    capturing_ = false;
    frozen_ = false;
    residuals_.clear();
  }

 private:
  struct Residual {
    int i = 0, j = 0;  // input and output interval
    int branch = 0;    // 0: zero output, 1: companding, 2: saturated
    double r1 = 0.0;   // q_b(u) - u, with the eps correction
    double r2 = 0.0;   // q_b'(g) - g
  };

  void capture(const BasicTensor<T>& x) {
    const auto& t = state_.table<double>();
    const double alpha = state_.alpha();
    residuals_.assign(x.numel(), Residual{});
    for (std::size_t n = 0; n < x.numel(); ++n) {
      const double xv = static_cast<double>(x[n]);
      Residual& r = residuals_[n];
      if (!opt_.spec.is_signed && !(xv > 0.0)) continue;
      if (xv == 0.0) continue;
      if (std::abs(xv) >= alpha) {
        r.branch = 2;
        continue;
      }
      r.branch = 1;
      const double v = std::abs(xv) / alpha;
      if (opt_.kind == QuantizerKind::kUniform) {
        r.r1 = detail::lattice_quantize(v, static_cast<double>(opt_.spec.scale()),
                                        opt_.spec.rounding) - v;
        continue;
      }
      const double u = detail::compress(v, t);
      const double vq = inside_unit(
          detail::lattice_quantize(u, static_cast<double>(opt_.spec.scale()), opt_.spec.rounding));
      r.i = t.input_interval(v);
      r.j = t.output_interval(vq);
      r.r1 = vq - u;
      const double g = (vq - t.beta[r.j]) / t.gamma[r.j] + t.d[r.j];
      if (opt_.spec.requantizes()) {
        r.r2 = detail::lattice_quantize(g, static_cast<double>(opt_.spec.outer_scale()),
                                        opt_.spec.rounding) - g;
      }
    }
    capturing_ = false;
    frozen_ = true;
  }

  BasicTensor<T> frozen_forward(const BasicTensor<T>& x) {
    LCQ_CHECK(residuals_.size() == x.numel(), ShapeMismatch,
              name_ + ": frozen residuals do not match the input");
    const auto& t = state_.table<double>();
    const double alpha = state_.alpha();
    BasicTensor<T> y(x.shape());
    for (std::size_t n = 0; n < x.numel(); ++n) {
      const Residual& r = residuals_[n];
      const double xv = static_cast<double>(x[n]);
      const double sg = (xv > 0.0) - (xv < 0.0);
      double out = 0.0;
      if (r.branch == 2) {
        out = sg * alpha;
      } else if (r.branch == 1) {
        const double v = std::abs(xv) / alpha;
        double g;
        if (opt_.kind == QuantizerKind::kUniform) {
          g = v + r.r1;
        } else {
          const double u = t.gamma[r.i] * (v - t.d[r.i]) + t.beta[r.i];
          g = (u + r.r1 - t.beta[r.j]) / t.gamma[r.j] + t.d[r.j] + r.r2;
        }
        out = sg * alpha * g;
      }
      y[n] = static_cast<T>(out);
    }
    return y;
  }

  std::string name_;
  QuantRole role_;
  QuantizerOptions opt_;
  BasicTensor<T> theta_, grad_theta_, alpha_, grad_alpha_;
  CompandingState state_;
  bool capturing_ = false;
  bool frozen_ = false;
  std::vector<Residual> residuals_;
};

struct QuantConvOptions {
  ConvGeometry geometry;
  bool bias = false;
  WeightNorm weight_norm = WeightNorm::kLimited;
  QuantizerOptions weight_quant;
  QuantizerOptions act_quant;
};

// Quantized convolution: y = Qw(w) (*) Qa(x) (+ b). A fully-connected layer is
// the 1x1 case on a (N, features, 1, 1) input.
template <typename T>
class QuantConv : public Layer<T> {
 public:
  QuantConv(std::string name, QuantConvOptions opt)
      : Layer<T>(name),
        opt_(opt),
        wq_(name + ".wq", QuantRole::kWeight, opt.weight_quant),
        aq_(name + ".aq", QuantRole::kActivation, opt.act_quant) {
    const auto& g = opt_.geometry;
    w_ = BasicTensor<T>({g.out_channels, g.in_channels, g.kernel, g.kernel});
    grad_w_ = BasicTensor<T>(w_.shape());
    if (opt_.bias) {
      b_ = BasicTensor<T>({g.out_channels});
      grad_b_ = BasicTensor<T>({g.out_channels});
    }
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) override {
    x_ = x;
    a_q_ = aq_.forward(x);
    quantize_weights();
    ConvColumns<T> cols = im2col(a_q_, opt_.geometry);
    BasicTensor<T> y = conv2d_forward(cols, w_q_, opt_.geometry);
    add_bias(y);
    if (training) cols_ = std::move(cols);
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    const auto& g = opt_.geometry;
    if (opt_.bias) {
      const std::size_t hw = dy.numel() / (static_cast<std::size_t>(dy.dim(0)) * g.out_channels);
      for (int n = 0; n < dy.dim(0); ++n)
        for (int o = 0; o < g.out_channels; ++o) {
          double s = 0.0;
          const T* p = dy.data() + (static_cast<std::size_t>(n) * g.out_channels + o) * hw;
          for (std::size_t i = 0; i < hw; ++i) s += p[i];
          grad_b_[o] += static_cast<T>(s);
        }
    }
    auto [da_q, dw_q] = conv2d_backward(dy, cols_, w_q_, g);
    // Weight path.
    if (wq_.enabled()) {
      TensorGrads<T> wg = lwn_backward(z_, dw_q, stats_, wq_.state(), wq_.spec(), wq_.kind(),
                                       opt_.weight_norm, wq_.options().jacobian);
      wq_.add_param_grads(wg, 1.0);
      for (std::size_t i = 0; i < grad_w_.numel(); ++i) grad_w_[i] += wg.d_input[i];
    } else {
      for (std::size_t i = 0; i < grad_w_.numel(); ++i) grad_w_[i] += dw_q[i];
    }
    return aq_.backward(x_, da_q);
  }

  // Integer path: encoded weights and activations through the layer's lookup
  // table. Requires both quantizers enabled.
  BasicTensor<T> infer_lut(const BasicTensor<T>& x) override {
    LCQ_CHECK(wq_.enabled() && aq_.enabled(), ConsistencyError,
              this->name() + ": LUT inference needs quantized weights and activations");
    aq_.refresh();
    wq_.refresh();
    const WeightStats stats = weight_stats(w_);
    const BasicTensor<T> z = standardize(w_, stats);
    const EncodedTensor ew = encode_tensor(z, wq_.state(), wq_.spec(), wq_.kind());
    const EncodedTensor ea = encode_tensor(x, aq_.state(), aq_.spec(), aq_.kind());
    const Lut lut = build_layer_lut(stats);
    BasicTensor<T> y = lut_infer_layer<T>(ew, ea, lut, opt_.geometry);
    add_bias(y);
    return y;
  }

  Lut build_layer_lut(const WeightStats& stats) const {
    const double sigma = opt_.weight_norm == WeightNorm::kLimited ? stats.sigma : 1.0;
    return build_lut(levels_for(wq_), wq_.spec(), levels_for(aq_), aq_.spec(), sigma);
  }

  void collect_params(std::vector<Parameter<T>>& out) override {
    out.push_back({this->name() + ".weight", &w_, &grad_w_, ParamGroup::kWeights});
    if (opt_.bias) out.push_back({this->name() + ".bias", &b_, &grad_b_, ParamGroup::kWeights});
    wq_.collect_params(out);
    aq_.collect_params(out);
  }

  BasicTensor<T>& weight() { return w_; }
  BasicTensor<T>& bias() { return b_; }
  bool has_bias() const { return opt_.bias; }
  QuantizerUnit<T>& weight_quantizer() { return wq_; }
  QuantizerUnit<T>& act_quantizer() { return aq_; }
  const QuantConvOptions& options() const { return opt_; }
  const BasicTensor<T>& last_input() const { return x_; }
  const BasicTensor<T>& quantized_weights() const { return w_q_; }
  const BasicTensor<T>& standardized_weights() const { return z_; }
  const WeightStats& last_stats() const { return stats_; }

  // Keeps mu and sigma fixed at their current values (gradient checks treat
  // them as constants, as the backward pass does).
  void freeze_weight_stats(bool on) {
    stats_frozen_ = on ? std::optional<WeightStats>(weight_stats(w_)) : std::nullopt;
  }

 private:
  static LevelTable levels_for(const QuantizerUnit<T>& q) {
    const CompandingState st = q.kind() == QuantizerKind::kUniform
                                   ? CompandingState::identity(1, q.state().alpha())
                                   : q.state();
    return level_table<T>(st, q.spec());
  }

  void quantize_weights() {
    if (!wq_.enabled()) {
      w_q_ = w_;
      return;
    }
    stats_ = stats_frozen_ ? *stats_frozen_ : weight_stats(w_);
    z_ = standardize(w_, stats_);
    w_q_ = wq_.forward(z_);
    if (opt_.weight_norm == WeightNorm::kLimited) {
      const T sigma = static_cast<T>(stats_.sigma);
      for (T& v : w_q_.span()) v = sigma * v;
    }
  }

  void add_bias(BasicTensor<T>& y) const {
    if (!opt_.bias) return;
    const int O = opt_.geometry.out_channels;
    const std::size_t hw = y.numel() / (static_cast<std::size_t>(y.dim(0)) * O);
    for (int n = 0; n < y.dim(0); ++n)
      for (int o = 0; o < O; ++o) {
        T* p = y.data() + (static_cast<std::size_t>(n) * O + o) * hw;
        for (std::size_t i = 0; i < hw; ++i) p[i] += b_[o];
      }
  }

  QuantConvOptions opt_;
  QuantizerUnit<T> wq_;
  QuantizerUnit<T> aq_;
  BasicTensor<T> w_, grad_w_, b_, grad_b_;
  // Forward cache.
  BasicTensor<T> x_, a_q_, z_, w_q_;
  WeightStats stats_;
  std::optional<WeightStats> stats_frozen_;
  ConvColumns<T> cols_;
};

}  // namespace lcq::nn

#endif  // LCQ_NN_QUANT_CONV_HPP_

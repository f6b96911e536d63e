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

#ifndef LCQ_NN_LAYERS_HPP_
#define LCQ_NN_LAYERS_HPP_

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "lcq/lut.hpp"
#include "lcq/tensor.hpp"

namespace lcq::nn {

// Optimizer treatment of a parameter: weights get weight decay and the
// weight learning rate; quantizer parameters (clip and companding) get their
// own learning rate; normalization affine parameters use the weight rate
// without decay.
enum class ParamGroup : std::uint8_t { kWeights, kQuantizer, kNorm };

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T>* value = nullptr;
  BasicTensor<T>* grad = nullptr;
  ParamGroup group = ParamGroup::kWeights;
};

// Non-learnable state that still belongs in a checkpoint (running statistics).
template <typename T>
struct Buffer {
  std::string name;
  BasicTensor<T>* value = nullptr;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual BasicTensor<T> forward(const BasicTensor<T>& x, bool training) = 0;
  // Consumes dL/d(output) of the most recent training forward; accumulates
  // parameter gradients and returns dL/d(input).
  virtual BasicTensor<T> backward(const BasicTensor<T>& dy) = 0;
  // Inference through integer lookup tables where the layer supports it.
  virtual BasicTensor<T> infer_lut(const BasicTensor<T>& x) { return forward(x, false); }

  virtual void collect_params(std::vector<Parameter<T>>& /*out*/) {}
  virtual void collect_buffers(std::vector<Buffer<T>>& /*out*/) {}
  // Visits this layer and any nested layers.
  virtual void visit(const std::function<void(Layer<T>&)>& fn) { fn(*this); }

  const std::string& name() const { return name_; }

 protected:
  explicit Layer(std::string name) : name_(std::move(name)) {}

 private:
  std::string name_;
};

template <typename T>
using MatrixR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatrixR<T>>;
template <typename T>
using ConstMapR = Eigen::Map<const MatrixR<T>>;

// Convolution kernels over NCHW tensors, lowered to one GEMM per batch:
// columns are (C*k*k) x (N*OH*OW).
template <typename T>
struct ConvColumns {
  MatrixR<T> cols;
  int n = 0, c = 0, h = 0, w = 0, oh = 0, ow = 0;
};

template <typename T>
ConvColumns<T> im2col(const BasicTensor<T>& x, const ConvGeometry& g) {
  LCQ_CHECK(x.rank() == 4 && x.dim(1) == g.in_channels, ShapeMismatch,
            "conv2d: input " + shape_string(x.shape()) + " does not match " +
                std::to_string(g.in_channels) + " input channels");
  ConvColumns<T> c;
  c.n = x.dim(0);
  c.c = x.dim(1);
  c.h = x.dim(2);
  c.w = x.dim(3);
  c.oh = g.out_size(c.h);
  c.ow = g.out_size(c.w);
  LCQ_CHECK(c.oh > 0 && c.ow > 0, ShapeMismatch, "conv2d: kernel larger than padded input");
  const int K = g.kernel;
  const int P = c.oh * c.ow;
  c.cols = MatrixR<T>::Zero(static_cast<Eigen::Index>(c.c) * K * K,
                            static_cast<Eigen::Index>(c.n) * P);
  for (int ch = 0; ch < c.c; ++ch) {
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(ch) * K + ky) * K + kx;
        T* dst = c.cols.row(row).data();
        for (int n = 0; n < c.n; ++n) {
          for (int oy = 0; oy < c.oh; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= c.h) continue;
            for (int ox = 0; ox < c.ow; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= c.w) continue;
              dst[static_cast<std::size_t>(n) * P + oy * c.ow + ox] = x.at4(n, ch, iy, ix);
            }
          }
        }
      }
    }
  }
  return c;
}

template <typename T>
BasicTensor<T> col2im(const MatrixR<T>& dcols, const ConvColumns<T>& c, const ConvGeometry& g) {
  BasicTensor<T> dx({c.n, c.c, c.h, c.w});
  const int K = g.kernel;
  const int P = c.oh * c.ow;
  for (int ch = 0; ch < c.c; ++ch) {
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(ch) * K + ky) * K + kx;
        const T* src = dcols.row(row).data();
        for (int n = 0; n < c.n; ++n) {
          for (int oy = 0; oy < c.oh; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= c.h) continue;
            for (int ox = 0; ox < c.ow; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= c.w) continue;
              dx.at4(n, ch, iy, ix) += src[static_cast<std::size_t>(n) * P + oy * c.ow + ox];
            }
          }
        }
      }
    }
  }
  return dx;
}

// y = w (*) x for weights (O, C, k, k); `c` must come from im2col(x).
template <typename T>
BasicTensor<T> conv2d_forward(const ConvColumns<T>& c, const BasicTensor<T>& w,
                              const ConvGeometry& g) {
  const Eigen::Index ckk = static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel;
  LCQ_CHECK(w.numel() == static_cast<std::size_t>(g.out_channels * ckk), ShapeMismatch,
            "conv2d: weight shape does not match geometry");
  ConstMapR<T> wm(w.data(), g.out_channels, ckk);
  const MatrixR<T> y = wm * c.cols;  // (O, N*P)
  const int P = c.oh * c.ow;
  BasicTensor<T> out({c.n, g.out_channels, c.oh, c.ow});
  for (int n = 0; n < c.n; ++n) {
    for (int o = 0; o < g.out_channels; ++o) {
      const T* src = y.row(o).data() + static_cast<std::size_t>(n) * P;
      std::copy(src, src + P, &out.at4(n, o, 0, 0));
    }
  }
  return out;
}

template <typename T>
MatrixR<T> gather_output_grad(const BasicTensor<T>& dy, const ConvColumns<T>& c, int out_channels) {
  const int P = c.oh * c.ow;
  LCQ_CHECK(dy.shape() == Shape({c.n, out_channels, c.oh, c.ow}), ShapeMismatch,
            "conv2d backward: gradient shape " + shape_string(dy.shape()));
  MatrixR<T> m(out_channels, static_cast<Eigen::Index>(c.n) * P);
  for (int n = 0; n < c.n; ++n) {
    for (int o = 0; o < out_channels; ++o) {
      const T* src = &dy.at4(n, o, 0, 0);
      std::copy(src, src + P, m.row(o).data() + static_cast<std::size_t>(n) * P);
    }
  }
  return m;
}

// Returns (dL/dx, dL/dw).
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> conv2d_backward(const BasicTensor<T>& dy,
                                                          const ConvColumns<T>& c,
                                                          const BasicTensor<T>& w,
                                                          const ConvGeometry& g) {
  const MatrixR<T> dym = gather_output_grad(dy, c, g.out_channels);
  const Eigen::Index ckk = static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel;
  ConstMapR<T> wm(w.data(), g.out_channels, ckk);
  BasicTensor<T> dw(w.shape());
  MapR<T>(dw.data(), g.out_channels, ckk).noalias() = dym * c.cols.transpose();
  const MatrixR<T> dcols = wm.transpose() * dym;
  return {col2im(dcols, c, g), std::move(dw)};
}

// Batch normalization over (N, C) or (N, C, H, W); statistics per channel.
template <typename T>
class BatchNorm : public Layer<T> {
 public:
  BatchNorm(std::string name, int channels, double momentum = 0.1, double eps = 1e-5)
      : Layer<T>(std::move(name)),
        gamma_({channels}, T{1}),
        beta_({channels}, T{0}),
        grad_gamma_({channels}),
        grad_beta_({channels}),
        running_mean_({channels}, T{0}),
        running_var_({channels}, T{1}),
        momentum_(momentum),
        eps_(eps) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) override {
    const int C = gamma_.dim(0);
    LCQ_CHECK((x.rank() == 2 || x.rank() == 4) && x.dim(1) == C, ShapeMismatch,
              this->name() + ": input " + shape_string(x.shape()));
    const int N = x.dim(0);
    const std::size_t inner = x.numel() / (static_cast<std::size_t>(N) * C);
    BasicTensor<T> y(x.shape());
    if (training) {
      xhat_ = BasicTensor<T>(x.shape());
      inv_std_.assign(C, 0.0);
    }
    for (int ch = 0; ch < C; ++ch) {
      double mean, var;
      if (training) {
        double s = 0.0;
        for (int n = 0; n < N; ++n) {
          const T* p = x.data() + (static_cast<std::size_t>(n) * C + ch) * inner;
          for (std::size_t i = 0; i < inner; ++i) s += p[i];
        }
        const double m = static_cast<double>(N) * inner;
        mean = s / m;
        double sq = 0.0;
        for (int n = 0; n < N; ++n) {
          const T* p = x.data() + (static_cast<std::size_t>(n) * C + ch) * inner;
          for (std::size_t i = 0; i < inner; ++i) sq += (p[i] - mean) * (p[i] - mean);
        }
        var = sq / m;
        const double unbiased = m > 1 ? var * m / (m - 1) : var;
        running_mean_[ch] = static_cast<T>((1 - momentum_) * running_mean_[ch] + momentum_ * mean);
        running_var_[ch] = static_cast<T>((1 - momentum_) * running_var_[ch] + momentum_ * unbiased);
      } else {
        mean = running_mean_[ch];
        var = running_var_[ch];
      }
      const double inv = 1.0 / std::sqrt(var + eps_);
      if (training) inv_std_[ch] = inv;
      const T tm = static_cast<T>(mean), ti = static_cast<T>(inv);
      for (int n = 0; n < N; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * C + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const T xh = (x[base + i] - tm) * ti;
          if (training) xhat_[base + i] = xh;
          y[base + i] = gamma_[ch] * xh + beta_[ch];
        }
      }
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    require_same_shape(dy, xhat_, (this->name() + " backward").c_str());
    const int C = gamma_.dim(0);
    const int N = dy.dim(0);
    const std::size_t inner = dy.numel() / (static_cast<std::size_t>(N) * C);
    const double m = static_cast<double>(N) * inner;
    BasicTensor<T> dx(dy.shape());
    for (int ch = 0; ch < C; ++ch) {
      double sdy = 0.0, sdyx = 0.0;
      for (int n = 0; n < N; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * C + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          sdy += dy[base + i];
          sdyx += static_cast<double>(dy[base + i]) * xhat_[base + i];
        }
      }
      grad_gamma_[ch] += static_cast<T>(sdyx);
      grad_beta_[ch] += static_cast<T>(sdy);
      const double k = static_cast<double>(gamma_[ch]) * inv_std_[ch] / m;
      for (int n = 0; n < N; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * C + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          dx[base + i] = static_cast<T>(k * (m * dy[base + i] - sdy - xhat_[base + i] * sdyx));
        }
      }
    }
    return dx;
  }

  void collect_params(std::vector<Parameter<T>>& out) override {
    out.push_back({this->name() + ".gamma", &gamma_, &grad_gamma_, ParamGroup::kNorm});
    out.push_back({this->name() + ".beta", &beta_, &grad_beta_, ParamGroup::kNorm});
  }
  void collect_buffers(std::vector<Buffer<T>>& out) override {
    out.push_back({this->name() + ".running_mean", &running_mean_});
    out.push_back({this->name() + ".running_var", &running_var_});
  }

  BasicTensor<T>& gamma() { return gamma_; }
  BasicTensor<T>& beta() { return beta_; }
  BasicTensor<T>& running_mean() { return running_mean_; }
  BasicTensor<T>& running_var() { return running_var_; }

 private:
  BasicTensor<T> gamma_, beta_, grad_gamma_, grad_beta_;
  BasicTensor<T> running_mean_, running_var_;
  BasicTensor<T> xhat_;
  std::vector<double> inv_std_;
  double momentum_;
  double eps_;
};

// Non-overlapping average pooling with a square window; trailing rows and
// columns that do not fill a window are dropped.
template <typename T>
class AvgPool : public Layer<T> {
 public:
  AvgPool(std::string name, int window) : Layer<T>(std::move(name)), k_(window) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) override {
    LCQ_CHECK(x.rank() == 4, ShapeMismatch, this->name() + ": expects NCHW input");
    in_shape_ = x.shape();
    const int N = x.dim(0), C = x.dim(1), OH = x.dim(2) / k_, OW = x.dim(3) / k_;
    BasicTensor<T> y({N, C, OH, OW});
    const T inv = static_cast<T>(1.0 / (k_ * k_));
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox) {
            T s = 0;
            for (int dy = 0; dy < k_; ++dy)
              for (int dx = 0; dx < k_; ++dx) s += x.at4(n, c, oy * k_ + dy, ox * k_ + dx);
            y.at4(n, c, oy, ox) = s * inv;
          }
    (void)training;
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    BasicTensor<T> dx(in_shape_);
    const T inv = static_cast<T>(1.0 / (k_ * k_));
    for (int n = 0; n < dy.dim(0); ++n)
      for (int c = 0; c < dy.dim(1); ++c)
        for (int oy = 0; oy < dy.dim(2); ++oy)
          for (int ox = 0; ox < dy.dim(3); ++ox) {
            const T g = dy.at4(n, c, oy, ox) * inv;
            for (int a = 0; a < k_; ++a)
              for (int b = 0; b < k_; ++b) dx.at4(n, c, oy * k_ + a, ox * k_ + b) = g;
          }
    return dx;
  }

 private:
  int k_;
  Shape in_shape_;
};

// Mean over H and W: (N, C, H, W) -> (N, C, 1, 1).
template <typename T>
class GlobalAvgPool : public Layer<T> {
 public:
  explicit GlobalAvgPool(std::string name) : Layer<T>(std::move(name)) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, bool /*training*/) override {
    LCQ_CHECK(x.rank() == 4, ShapeMismatch, this->name() + ": expects NCHW input");
    in_shape_ = x.shape();
    const int N = x.dim(0), C = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    BasicTensor<T> y({N, C, 1, 1});
    for (std::size_t i = 0; i < static_cast<std::size_t>(N) * C; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < hw; ++j) s += x[i * hw + j];
      y[i] = s / static_cast<T>(hw);
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    BasicTensor<T> dx(in_shape_);
    const std::size_t hw = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
    for (std::size_t i = 0; i < dy.numel(); ++i) {
      const T g = dy[i] / static_cast<T>(hw);
      for (std::size_t j = 0; j < hw; ++j) dx[i * hw + j] = g;
    }
    return dx;
  }

 private:
  Shape in_shape_;
};

// (N, ...) -> (N, features, 1, 1), the input layout of fully-connected layers.
template <typename T>
class Flatten : public Layer<T> {
 public:
  explicit Flatten(std::string name) : Layer<T>(std::move(name)) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, bool /*training*/) override {
    in_shape_ = x.shape();
    const int n = x.dim(0);
    return x.reshaped({n, static_cast<int>(x.numel() / n), 1, 1});
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override { return dy.reshaped(in_shape_); }

 private:
  Shape in_shape_;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  explicit ReLU(std::string name) : Layer<T>(std::move(name)) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, bool training) override {
    BasicTensor<T> y = x;
    for (T& v : y.span()) v = v > T{0} ? v : T{0};
    if (training) x_ = x;
    return y;
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    BasicTensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.numel(); ++i)
      if (!(x_[i] > T{0})) dx[i] = T{0};
    return dx;
  }

 private:
  BasicTensor<T> x_;
};

// Mean softmax cross-entropy over the batch and its gradient w.r.t. the
// logits (N, classes[, 1, 1]).
template <typename T>
struct LossResult {
  double loss = 0.0;
  int correct = 0;
  BasicTensor<T> dlogits;
};

template <typename T>
LossResult<T> softmax_xent(const BasicTensor<T>& logits, std::span<const int> labels) {
  const int N = logits.dim(0);
  LCQ_CHECK(static_cast<int>(labels.size()) == N, ShapeMismatch,
            "softmax_xent: label count does not match batch");
  const int C = static_cast<int>(logits.numel() / N);
  LossResult<T> r;
  r.dlogits = BasicTensor<T>(logits.shape());
  std::vector<double> p(C);
  for (int n = 0; n < N; ++n) {
    const T* z = logits.data() + static_cast<std::size_t>(n) * C;
    const int y = labels[n];
    LCQ_CHECK(y >= 0 && y < C, ContractViolation, "softmax_xent: label out of range");
    double peak = z[0];
    int arg = 0;
    for (int c = 1; c < C; ++c) {
      if (z[c] > peak) {
        peak = z[c];
        arg = c;
      }
    }
    double s = 0.0;
    for (int c = 0; c < C; ++c) {
      p[c] = std::exp(static_cast<double>(z[c]) - peak);
      s += p[c];
    }
    r.loss += std::log(s) - (static_cast<double>(z[y]) - peak);
    r.correct += arg == y;
    for (int c = 0; c < C; ++c) {
      const double g = (p[c] / s - (c == y ? 1.0 : 0.0)) / N;
      r.dlogits[static_cast<std::size_t>(n) * C + c] = static_cast<T>(g);
    }
  }
  r.loss /= N;
  return r;
}

}  // namespace lcq::nn

#endif  // LCQ_NN_LAYERS_HPP_

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

#include "lcq/verify.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "lcq/lut.hpp"
#include "lcq/quantizer.hpp"
#include "lcq/quantizer_grad.hpp"
#include "lcq/weight_norm.hpp"

namespace lcq::verify {
namespace {

constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon();

// Largest k in [0, K-1] with bp[k] <= x.
int linear_search(const std::vector<double>& bp, double x) {
  const int K = static_cast<int>(bp.size()) - 1;
  for (int k = K - 1; k > 0; --k) {
    if (bp[k] <= x) return k;
  }
  return 0;
}

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

CheckResult finish(std::string name, std::int64_t count, double err, double tol,
                   std::string detail = "") {
  CheckResult r;
  r.name = std::move(name);
  r.count = count;
  r.max_error = err;
  r.tolerance = tol;
  r.passed = count > 0 && err < tol;
  r.detail = std::move(detail);
  return r;
}

// Random quantizer configuration for property sweeps.
struct RandomQuantizer {
  std::vector<double> theta;
  double alpha = 1.0;
  QuantSpec spec;
};

RandomQuantizer random_quantizer(std::mt19937_64& rng, double theta_scale) {
  std::uniform_int_distribution<int> kdist(1, 16), bdist(2, 8), coin(0, 1), extra(0, 4);
  std::normal_distribution<double> nd(0.0, theta_scale);
  std::uniform_real_distribution<double> adist(0.25, 4.0);
  RandomQuantizer q;
  const int K = kdist(rng);
  q.theta.resize(K);
  for (double& t : q.theta) t = nd(rng);
  q.alpha = adist(rng);
  const int bits = bdist(rng);
  const bool is_signed = coin(rng) == 1;
  const int e = extra(rng);
  const int outer = e == 0 ? 0 : std::min(15, bits + e);
  q.spec = QuantSpec::make(bits, is_signed, outer == bits ? 0 : outer, K);
  return q;
}

double draw_inside(std::mt19937_64& rng, double alpha, bool is_signed) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    double x = u(rng) * alpha;
    if (is_signed && u(rng) < 0.5) x = -x;
    if (x != 0.0 && std::abs(x) < alpha) return x;
  }
}

// Extended-precision tables, used where a finite difference would otherwise
// be dominated by double rounding.
struct ExtTables {
  std::vector<long double> gamma, beta, d;
};

ExtTables ext_tables(const std::vector<long double>& theta) {
  const std::size_t K = theta.size();
  long double peak = theta[0];
  for (long double t : theta) peak = std::max(peak, t);
  std::vector<long double> w(K);
  long double z = 0.0L;
  for (std::size_t k = 0; k < K; ++k) {
    w[k] = std::exp(theta[k] - peak);
    z += w[k];
  }
  ExtTables t;
  const long double delta = 1.0L / static_cast<long double>(K);
  t.gamma.resize(K);
  t.beta.assign(K + 1, 0.0L);
  t.d.assign(K + 1, 0.0L);
  for (std::size_t k = 0; k < K; ++k) {
    w[k] /= z;
    t.gamma[k] = std::max<long double>(w[k], 1e-6L) / delta;
    t.beta[k + 1] = t.beta[k] + w[k];
    t.d[k + 1] = t.d[k] + delta;
  }
  return t;
}

// Direct NCHW convolution in double.
Tensor64 direct_conv(const Tensor64& x, const Tensor64& w, const ConvGeometry& g) {
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int OH = g.out_size(H), OW = g.out_size(W);
  Tensor64 y({N, g.out_channels, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double s = 0.0;
          for (int c = 0; c < g.in_channels; ++c)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.pad + ky, ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                s += w.at4(o, c, ky, kx) * x.at4(n, c, iy, ix);
              }
          y.at4(n, o, oy, ox) = s;
        }
  return y;
}

}  // namespace

double fd_gradient(const std::function<double(double)>& fn, double x, double step) {
  LCQ_CHECK(step > 0.0, ContractViolation, "fd_gradient: step must be positive");
  return (fn(x + step) - fn(x - step)) / (2.0 * step);
}

RefTables ref_tables(const std::vector<double>& theta) {
  LCQ_CHECK(!theta.empty(), ContractViolation, "ref_tables: empty theta");
  const std::size_t K = theta.size();
  double peak = theta[0];
  for (double t : theta) peak = std::max(peak, t);
  std::vector<double> w(K);
  double z = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    w[k] = std::exp(theta[k] - peak);
    z += w[k];
  }
  for (double& v : w) v /= z;
  RefTables t;
  const double delta = 1.0 / static_cast<double>(K);
  t.gamma.resize(K);
  t.beta.assign(K + 1, 0.0);
  t.d.assign(K + 1, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    t.gamma[k] = std::max(w[k], 1e-6) / delta;
    t.beta[k + 1] = t.beta[k] + w[k];
    t.d[k + 1] = t.d[k] + delta;
  }
  t.beta[K] = 1.0;
  t.d[K] = 1.0;
  return t;
}

double ref_compress(double v, const RefTables& t) {
  const int k = linear_search(t.d, v);
  const double u = t.gamma[k] * (v - t.d[k]) + t.beta[k];
  return u < 1.0 ? u : kBelowOne;
}

double ref_expand(double u, const RefTables& t) {
  if (u >= 1.0) return 1.0;
  const int k = linear_search(t.beta, u);
  const double v = (u - t.beta[k]) / t.gamma[k] + t.d[k];
  return v < 1.0 ? v : kBelowOne;
}

double ref_quantize(double x, const std::vector<double>& theta, double alpha, const QuantSpec& spec) {
  if (!spec.is_signed && !(x > 0.0)) return 0.0;
  const double mag = std::abs(x);
  double out;
  if (mag >= alpha) {
    out = alpha;
  } else {
    const RefTables t = ref_tables(theta);
    const bool round = spec.rounding == Rounding::kNearest;
    const double s = static_cast<double>(spec.scale());
    const double u = ref_compress(mag / alpha, t);
    double g = ref_expand(round ? std::round(s * u) / s : u, t);
    if (spec.requantizes() && round) {
      const double so = static_cast<double>(spec.outer_scale());
      g = std::round(so * g) / so;
    }
    out = alpha * g;
  }
  return x < 0.0 ? -out : out;
}

std::vector<double> enumerate_levels_bruteforce(const std::vector<double>& theta, double alpha,
                                                const QuantSpec& spec, int grid_n) {
  LCQ_CHECK(grid_n >= 2, ContractViolation, "enumerate_levels_bruteforce: grid too small");
  const double lo = spec.is_signed ? -1.25 * alpha : 0.0;
  const double hi = 1.25 * alpha;
  const RefTables t = ref_tables(theta);
  std::set<double> seen;
  const double s = static_cast<double>(spec.scale());
  const double so = spec.requantizes() ? static_cast<double>(spec.outer_scale()) : 0.0;
  for (int i = 0; i < grid_n; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / (grid_n - 1);
    // Inline of ref_quantize with the tables built once.
    if (!spec.is_signed && !(x > 0.0)) {
      seen.insert(0.0);
      continue;
    }
    const double mag = std::abs(x);
    double out;
    if (mag >= alpha) {
      out = alpha;
    } else {
      double g = ref_expand(std::round(s * ref_compress(mag / alpha, t)) / s, t);
      if (spec.requantizes()) g = std::round(so * g) / so;
      out = alpha * g;
    }
    seen.insert(x < 0.0 ? -out : out);
  }
  return {seen.begin(), seen.end()};
}

std::string results_csv(const std::vector<CheckResult>& results) {
  std::string out = "check,samples,max_error,tolerance,passed\n";
  for (const auto& r : results) {
    out += fmt::format("{},{},{:.6e},{:.1e},{}\n", r.name, r.count, r.max_error, r.tolerance,
                       r.passed ? 1 : 0);
  }
  return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

CheckResult check_null_gradient(int states, std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::int64_t count = 0;
  for (int n = 0; n < states; ++n) {
    RandomQuantizer q = random_quantizer(rng, 1.0);
    const QuantSpec spec = with_identity_rounding(q.spec);
    const CompandingState st = CompandingState::derive(q.theta, q.alpha);
    for (int i = 0; i < 4; ++i) {
      const double x = draw_inside(rng, q.alpha, spec.is_signed);
      for (auto mode : {ThetaJacobian::kDiagonal, ThetaJacobian::kFull}) {
        for (double g : grad_ql_theta(x, st, spec, mode)) worst = std::max(worst, std::abs(g));
      }
      worst = std::max(worst, std::abs(grad_ql_alpha(x, st, spec)));
      ++count;
    }
  }
  return finish("null_gradient_identity_rounding", count, worst, tol);
}

std::vector<CheckResult> check_component_fd(int samples, std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> kdist(2, 16);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double h = 1e-6, gap = 1e-3;
  double e_fg = 0, e_fb = 0, e_ig = 0, e_ib = 0;
  std::int64_t count = 0;
  auto far = [&](double x, const std::vector<double>& bp) {
    for (double b : bp)
      if (std::abs(x - b) < gap) return false;
    return true;
  };
  while (count < samples) {
    const int K = kdist(rng);
    std::vector<double> theta(K);
    for (double& t : theta) t = nd(rng);
    const CompandingState st = CompandingState::derive(theta, 1.0);
    PiecewiseLinear<double> t = st.table<double>();

    const double v = unit(rng);
    const double u = unit(rng);
    if (!far(v, t.d) || !far(u, t.beta)) continue;
    if (detail::compress(v, t) > 1.0 - gap || detail::expand(u, t) > 1.0 - gap) continue;

    auto fd_on = [&](double& slot, const std::function<double()>& fn) {
      const double saved = slot;
      return fd_gradient(
          [&](double p) {
            slot = p;
            const double r = fn();
            slot = saved;
            return r;
          },
          saved, h);
    };
    const ComponentGrad<double> cf = grad_compress_params(v, t);
    const double fg = fd_on(t.gamma[cf.interval], [&] { return detail::compress(v, t); });
    const double fb = fd_on(t.beta[cf.interval], [&] { return detail::compress(v, t); });
    e_fg = std::max(e_fg, rel_error(cf.d_gamma, fg, 1e-12));
    e_fb = std::max(e_fb, rel_error(cf.d_beta, fb, 1e-12));
    const ComponentGrad<double> ce = grad_expand_params(u, t);
    const double ig = fd_on(t.gamma[ce.interval], [&] { return detail::expand(u, t); });
    const double ib = fd_on(t.beta[ce.interval], [&] { return detail::expand(u, t); });
    e_ig = std::max(e_ig, rel_error(ce.d_gamma, ig, 1e-12));
    e_ib = std::max(e_ib, rel_error(ce.d_beta, ib, 1e-12));
    // Slots of other intervals have zero derivative.
    const int other = (cf.interval + 1) % K;
    e_fg = std::max(e_fg, std::abs(fd_on(t.gamma[other], [&] { return detail::compress(v, t); })));
    ++count;
  }
  return {finish("fd_compress_d_gamma", count, e_fg, tol),
          finish("fd_compress_d_beta", count, e_fb, tol),
          finish("fd_expand_d_gamma", count, e_ig, tol),
          finish("fd_expand_d_beta", count, e_ib, tol)};
}

CheckResult check_theta_jacobian_fd(int samples, std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::int64_t count = 0;
  const long double h = 1e-6L;
  while (count < samples) {
    RandomQuantizer q = random_quantizer(rng, 1.0);
    const QuantSpec& spec = q.spec;
    const double x = draw_inside(rng, q.alpha, spec.is_signed);
    const RefTables t0 = ref_tables(q.theta);
    const double v = std::abs(x) / q.alpha;
    const double s = static_cast<double>(spec.scale());
    const double u0 = ref_compress(v, t0);
    double vq = std::round(s * u0) / s;
    if (vq >= 1.0) vq = kBelowOne;
    const int i = linear_search(t0.d, v);
    const int j = linear_search(t0.beta, vq);
    const double r1 = vq - u0;
    const double g0 = (vq - t0.beta[j]) / t0.gamma[j] + t0.d[j];
    const double r2 = spec.requantizes()
                          ? std::round(static_cast<double>(spec.outer_scale()) * g0) /
                                    static_cast<double>(spec.outer_scale()) - g0
                          : 0.0;
    const double sg = x > 0 ? 1.0 : -1.0;
    auto surrogate_ext = [&](const std::vector<long double>& th) -> long double {
      const ExtTables t = ext_tables(th);
      const long double u = t.gamma[i] * (v - t.d[i]) + t.beta[i];
      return sg * q.alpha * ((u + r1 - t.beta[j]) / t.gamma[j] + t.d[j] + r2);
    };
    const CompandingState st = CompandingState::derive(q.theta, q.alpha);
    const auto analytic = grad_ql_theta(x, st, spec, ThetaJacobian::kFull);
    for (std::size_t n = 0; n < q.theta.size(); ++n) {
      std::vector<long double> th(q.theta.begin(), q.theta.end());
      th[n] = q.theta[n] + h;
      const long double up = surrogate_ext(th);
      th[n] = q.theta[n] - h;
      const double fd = static_cast<double>((up - surrogate_ext(th)) / (2.0L * h));
      worst = std::max(worst, rel_error(analytic[n], fd, 1e-6));
    }
    ++count;
  }
  return finish("fd_theta_full_jacobian", count, worst, tol);
}

CheckResult check_network_fd(bool identity_rounding, std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  nn::ModelConfig mc;
  mc.arch = "toy";
  mc.in_channels = 2;
  mc.image_size = 4;
  mc.classes = 3;
  nn::QuantPlan plan;
  plan.method = nn::Method::kLcq;
  plan.weight_bits = 3;
  plan.act_bits = 3;
  plan.outer_bits = 8;
  plan.intervals = 4;
  plan.alpha_w_init = 6.0;  // no saturated weights: their straight-through gradient is not a derivative
  plan.alpha_a_init = 2.5;
  plan.jacobian = ThetaJacobian::kFull;

  auto model = nn::build_model<double>(mc, plan);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto layers = nn::quant_layers(*model);
  for (auto* q : layers) {
    for (auto* u : {&q->weight_quantizer(), &q->act_quantizer()}) {
      for (double& t : u->theta().span()) t = identity_rounding ? 0.5 * nd(rng) : 0.0;
    }
  }
  set_identity_rounding(*model, identity_rounding);

  const int N = 6;
  Tensor64 x({N, mc.in_channels, mc.image_size, mc.image_size});
  std::vector<int> labels(N);
  auto loss = [&] {
    return nn::softmax_xent(model->forward(x, true), std::span<const int>(labels)).loss;
  };
  // Draw weights and inputs until no quantizer input sits within 1e-3 of a
  // kink (0 or +-alpha), where the loss is not differentiable.
  const double gap = 1e-3;
  int attempts = 0;
  for (;; ++attempts) {
    LCQ_CHECK(attempts < 100, ConsistencyError, "check_network_fd: no smooth base point found");
    nn::init_weights(*model, seed + static_cast<std::uint64_t>(attempts));
    for (auto* q : layers) q->freeze_weight_stats(true);
    for (double& v : x.span()) v = nd(rng);
    for (int& l : labels) l = std::uniform_int_distribution<int>(0, mc.classes - 1)(rng);
    loss();
    bool smooth = true;
    for (auto* q : layers) {
      const double aa = q->act_quantizer().state().alpha();
      for (double v : q->last_input().span()) {
        if (std::abs(v) < gap || std::abs(v - aa) < gap) smooth = false;
      }
      const double aw = q->weight_quantizer().state().alpha();
      for (double z : q->standardized_weights().span()) {
        if (std::abs(z) < gap || std::abs(std::abs(z) - aw) < gap) smooth = false;
      }
    }
    if (smooth) break;
  }

  nn::zero_grads(*model);
  {
    auto r = nn::softmax_xent(model->forward(x, true), std::span<const int>(labels));
    model->backward(r.dlogits);
  }
  auto params = nn::parameters(*model);
  std::vector<Tensor64> analytic;
  for (auto& p : params) analytic.push_back(*p.grad);

  if (!identity_rounding) {
    for (auto* q : layers) {
      q->weight_quantizer().capture_offsets();
      q->act_quantizer().capture_offsets();
    }
    loss();
  }

  // Identity rounding leaves the loss smooth everywhere, so the default step
  // applies; at 1e-4 the central difference's own O(h^2) error is ~1e-5 on
  // this network. The frozen-residual surrogate uses 1e-4.
  const double h = identity_rounding ? 1e-5 : 1e-4;
  double worst = 0.0;
  std::string worst_name;
  std::int64_t count = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (std::size_t i = 0; i < p.value->numel(); ++i) {
      double& slot = (*p.value)[i];
      const double saved = slot;
      const double fd = fd_gradient(
          [&](double v) {
            slot = v;
            const double l = loss();
            slot = saved;
            return l;
          },
          saved, h);
      const double e = rel_error(analytic[pi][i], fd, 1e-4);
      if (e > worst) {
        worst = e;
        worst_name = fmt::format("{}[{}]", p.name, i);
      }
      ++count;
    }
  }
  for (auto* q : layers) {
    q->weight_quantizer().release_offsets();
    q->act_quantizer().release_offsets();
  }
  return finish(identity_rounding ? "network_fd_identity_rounding" : "network_fd_frozen_rounding",
                count, worst, tol, fmt::format("step {:.0e}, worst {}", h, worst_name));
}

std::vector<CheckResult> check_lut(int bits_w, int bits_a, int outer_bits, std::uint64_t seed,
                                   double tol) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  struct Side {
    QuantSpec spec;
    CompandingState state;
    QuantizerKind kind;
  };
  // 2-bit weights and b' <= b fall back to the uniform quantizer, whose
  // levels already lie on the b-bit lattice.
  auto make_side = [&](int bits, bool is_signed, double alpha) {
    Side s;
    const bool uniform = (is_signed && bits == 2) || outer_bits <= bits;
    s.kind = uniform ? QuantizerKind::kUniform : QuantizerKind::kCompanding;
    if (uniform) {
      s.spec = QuantSpec::make(bits, is_signed, 0, 1);
      s.state = CompandingState::identity(1, alpha);
    } else {
      s.spec = QuantSpec::make(bits, is_signed, outer_bits, 8);
      std::vector<double> th(8);
      for (double& t : th) t = 0.7 * nd(rng);
      s.state = CompandingState::derive(th, alpha);
    }
    return s;
  };
  const Side w = make_side(bits_w, true, 1.5 + 2.0 * unif(rng));
  const Side a = make_side(bits_a, false, 2.0 + 4.0 * unif(rng));

  ConvGeometry g{3, 4, 3, 1, 1};
  Tensor64 wt({g.out_channels, g.in_channels, g.kernel, g.kernel});
  for (double& v : wt.span()) v = 0.1 * nd(rng);
  Tensor64 at({2, g.in_channels, 6, 6});
  for (double& v : at.span()) v = 0.5 + 1.5 * nd(rng);

  const WeightStats stats = weight_stats(wt);
  const LevelTable lw = level_table<double>(w.state, w.spec);
  const LevelTable la = level_table<double>(a.state, a.spec);
  const Lut lut = build_lut(lw, w.spec, la, a.spec, stats.sigma);
  const std::string tag = fmt::format("w{}a{}o{}", bits_w, bits_a, outer_bits);

  // Exhaustive pairs: integer entries equal the product of the numerators,
  // and the decoded levels are exactly the quantizer's output levels.
  std::int64_t mismatches = 0, pairs = 0;
  for (int iw = 0; iw < lut.m_w; ++iw) {
    for (int ia = 0; ia < lut.m_a; ++ia) {
      const std::int64_t expect = lw.codes[iw + 1] * la.codes[ia + 1];
      mismatches += lut.at(iw, ia) != expect;
      ++pairs;
    }
  }
  auto level_mismatch = [](const Side& s, const LevelTable& lt) {
    std::vector<double> decoded;
    for (std::int64_t n : lt.codes) decoded.push_back(lt.alpha * (static_cast<double>(n) / lt.code_scale));
    decoded.push_back(lt.alpha);
    std::sort(decoded.begin(), decoded.end());
    decoded.erase(std::unique(decoded.begin(), decoded.end()), decoded.end());
    const CompandingState st =
        s.kind == QuantizerKind::kUniform ? CompandingState::identity(1, s.state.alpha()) : s.state;
    std::vector<double> levels = quant_levels<double>(st, s.spec);
    std::vector<double> mags;
    for (double v : levels)
      if (v >= 0.0) mags.push_back(v);
    return decoded != mags;
  };
  const bool levels_bad = level_mismatch(w, lw) || level_mismatch(a, la);

  // Random convolution.
  Tensor64 wq = lwn_quantize(wt, stats, w.state, w.spec, w.kind);
  Tensor64 aq(at.shape());
  for (std::size_t i = 0; i < at.numel(); ++i) aq[i] = quantize_value(at[i], a.state, a.spec, a.kind);
  const Tensor64 ref = direct_conv(aq, wq, g);
  const Tensor64 z = standardize(wt, stats);
  const EncodedTensor ew = encode_tensor(z, w.state, w.spec, w.kind);
  const EncodedTensor ea = encode_tensor(at, a.state, a.spec, a.kind);
  const Tensor64 out = lut_infer_layer<double>(ew, ea, lut, g);
  double conv_err = 0.0;
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    conv_err = std::max(conv_err, std::abs(out[i] - ref[i]) / std::max(std::abs(ref[i]), lut.rescale));
  }
  // Decoding reproduces the forward quantizer exactly.
  const Tensor64 dw = decode_tensor<double>(ew, lw, stats.sigma);
  const Tensor64 da = decode_tensor<double>(ea, la);
  double decode_err = 0.0;
  for (std::size_t i = 0; i < dw.numel(); ++i) decode_err = std::max(decode_err, std::abs(dw[i] - wq[i]));
  for (std::size_t i = 0; i < da.numel(); ++i) decode_err = std::max(decode_err, std::abs(da[i] - aq[i]));

  return {
      finish("lut_pairs_" + tag, pairs, static_cast<double>(mismatches + (levels_bad ? 1 : 0)), 0.5,
             "integer entry or decoded level mismatches"),
      finish("lut_decode_" + tag, static_cast<std::int64_t>(dw.numel() + da.numel()), decode_err,
             std::numeric_limits<double>::min(), "must be exactly zero"),
      finish("lut_conv_" + tag, static_cast<std::int64_t>(ref.numel()), conv_err, tol),
  };
}

CheckResult check_lut_network(std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  nn::ModelConfig mc;
  mc.arch = "toy";
  mc.in_channels = 2;
  mc.image_size = 5;
  mc.classes = 4;
  nn::QuantPlan plan;
  plan.weight_bits = 3;
  plan.act_bits = 3;
  plan.outer_bits = 8;
  plan.intervals = 8;
  auto model = nn::build_model<double>(mc, plan);
  nn::init_weights(*model, seed);
  for (auto* q : nn::quant_layers(*model)) {
    for (auto* u : {&q->weight_quantizer(), &q->act_quantizer()}) {
      for (double& t : u->theta().span()) t = 0.5 * nd(rng);
      u->alpha()[0] = u->role() == QuantRole::kWeight ? 2.5 : 2.0;
    }
  }
  std::vector<nn::Buffer<double>> bufs;
  model->collect_buffers(bufs);
  for (auto& b : bufs) {
    const bool var = b.name.find("running_var") != std::string::npos;
    for (double& v : b.value->span()) v = var ? 0.5 + std::abs(nd(rng)) : 0.3 * nd(rng);
  }
  Tensor64 x({8, mc.in_channels, mc.image_size, mc.image_size});
  for (double& v : x.span()) v = 0.5 + nd(rng);
  const Tensor64 ref = model->forward(x, false);
  const Tensor64 lut = model->infer_lut(x);
  double mean_abs = 0.0;
  for (double v : ref.span()) mean_abs += std::abs(v);
  mean_abs /= static_cast<double>(ref.numel());
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    worst = std::max(worst, std::abs(lut[i] - ref[i]) / std::max(std::abs(ref[i]), mean_abs));
  }
  return finish("lut_network_logits", static_cast<std::int64_t>(ref.numel()), worst, tol);
}

std::vector<CheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(check_null_gradient(10000, seed));
  for (auto& r : check_component_fd(10000, seed + 1)) out.push_back(std::move(r));
  out.push_back(check_theta_jacobian_fd(2000, seed + 2));
  out.push_back(check_network_fd(true, seed + 3, 1e-6));
  out.push_back(check_network_fd(false, seed + 4, 1e-2));
  return out;
}

std::vector<CheckResult> run_lut_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::uint64_t s = seed;
  for (int bw : {2, 3, 4})
    for (int ba : {2, 3, 4})
      for (int outer : {4, 6, 8})
        for (auto& r : check_lut(bw, ba, outer, s++)) out.push_back(std::move(r));
  out.push_back(check_lut_network(seed + 1000));
  return out;
}

}  // namespace lcq::verify

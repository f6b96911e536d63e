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

#ifndef LCQ_VERIFY_HPP_
#define LCQ_VERIFY_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lcq/nn/model.hpp"
#include "lcq/quant_spec.hpp"

// Independent oracles for the quantizer, its gradients and the LUT path. The
// reference quantizer here re-implements the forward definitions with its
// own softmax, tables and linear interval search.

namespace lcq::verify {

// (f(x + h) - f(x - h)) / 2h.
double fd_gradient(const std::function<double(double)>& fn, double x, double step = 1e-5);

// Reference tables and forward quantizer.
struct RefTables {
  std::vector<double> gamma, beta, d;  // beta, d have K + 1 entries
};
RefTables ref_tables(const std::vector<double>& theta);
double ref_compress(double v, const RefTables& t);
double ref_expand(double u, const RefTables& t);
// Q_L (re-quantized when `spec` has an outer bit-width).
double ref_quantize(double x, const std::vector<double>& theta, double alpha, const QuantSpec& spec);

// Sweeps grid_n evenly spaced inputs over [-1.25 alpha, 1.25 alpha]
// ([0, 1.25 alpha] when unsigned) through the reference quantizer and returns
// the sorted distinct outputs.
std::vector<double> enumerate_levels_bruteforce(const std::vector<double>& theta, double alpha,
                                                const QuantSpec& spec, int grid_n = 1000000);

// Sets the rounding mode of every quantizer in a model (identity rounding
// turns each quantizer into a clipped identity map).
template <typename T>
void set_identity_rounding(nn::Layer<T>& model, bool on) {
  for (auto* q : nn::quant_layers(model)) {
    q->weight_quantizer().set_rounding(on ? Rounding::kIdentity : Rounding::kNearest);
    q->act_quantizer().set_rounding(on ? Rounding::kIdentity : Rounding::kNearest);
  }
}

// Outcome of one check: the largest error over `count` samples against a
// tolerance.
struct CheckResult {
  std::string name;
  std::int64_t count = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

std::string results_csv(const std::vector<CheckResult>& results);
bool all_passed(const std::vector<CheckResult>& results);

// Identity-rounding null gradient: |dQ/dtheta_k| and |dQ/dalpha| over random
// states, bit-widths and inputs inside the clip range (both Jacobian modes).
CheckResult check_null_gradient(int states, std::uint64_t seed, double tol = 1e-10);

// Finite differences (step 1e-6) of f and f^{-1} against the analytic
// slope/breakpoint gradients, at points at least 1e-3 from any breakpoint.
std::vector<CheckResult> check_component_fd(int samples, std::uint64_t seed, double tol = 1e-5);

// Full-Jacobian theta gradient of Q against finite differences of Q with its
// rounding residuals frozen, at random theta.
CheckResult check_theta_jacobian_fd(int samples, std::uint64_t seed, double tol = 1e-6);

// End-to-end finite differences of the training loss of a three-layer toy
// network (double precision) with respect to every parameter.
//   identity_rounding = true:  random theta, step 1e-5, tolerance 1e-6.
//   identity_rounding = false: theta = 0, nearest rounding with each
//     element's rounding residual frozen, step 1e-4, tolerance 1e-2.
// Weight statistics are held fixed, as in the backward pass. The error is
// |analytic - fd| / max(|analytic|, |fd|, 1e-4).
CheckResult check_network_fd(bool identity_rounding, std::uint64_t seed, double tol);

// LUT checks for one (b_w, b_a, b') combination: exhaustive level-pair
// products (exact) and a random 3x3 convolution against a direct double
// convolution of the dequantized tensors (relative error, denominator
// max(|ref|, rescale)).
std::vector<CheckResult> check_lut(int bits_w, int bits_a, int outer_bits, std::uint64_t seed,
                                   double tol = 1e-5);

// Float path vs LUT path of a small quantized network in double precision.
CheckResult check_lut_network(std::uint64_t seed, double tol = 1e-5);

// Everything above with the default sample counts.
std::vector<CheckResult> run_gradcheck_suite(std::uint64_t seed);
std::vector<CheckResult> run_lut_suite(std::uint64_t seed);

}  // namespace lcq::verify

#endif  // LCQ_VERIFY_HPP_

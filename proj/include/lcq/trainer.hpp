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

#ifndef LCQ_TRAINER_HPP_
#define LCQ_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lcq/data.hpp"
#include "lcq/nn/model.hpp"

namespace lcq {

// Thrown when the training loss becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  // Model and quantization.
  nn::ModelConfig model;
  nn::QuantPlan plan;

  // Data.
  std::string dataset = "mnist";  // mnist | cifar10 | synth
  std::string data_dir = "data/mnist";
  data::Normalization norm;
  data::AugmentOptions augment;
  int train_limit = 0;  // 0: all
  int test_limit = 0;
  int synth_train = 600;
  int synth_test = 200;
  int synth_dim = 16;

  // Optimization.
  int epochs = 4;
  int batch_size = 64;
  double lr_weights = 0.05;
  double lr_quant = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double warmup_epochs = 0.0;
  double warmup_start_factor = 0.1;  // warm-up starts at this fraction of the rate
  std::uint64_t seed = 1;

  // Initialization.
  std::string init_checkpoint;  // full-precision (or any) checkpoint to start from
  // Non-default: set each clip value to this percentile of |input| on one
  // batch before training (0 keeps the fixed initial values).
  double alpha_calibration_percentile = 0.0;

  // Outputs.
  std::string output_dir = "runs/default";
  bool save_checkpoints = true;
  // Progress on stderr: -1 silent, 0 one line per epoch, n > 0 also every n steps.
  int log_every = 0;
  // Stop after this epoch (checkpoint written) as if interrupted; 0 runs to
  // `epochs`. The schedule still spans `epochs`.
  int stop_after_epoch = 0;
};

// Config file grammar, one setting per line:
//   line    := blank | comment | setting
//   comment := '#' anything
//   setting := key '=' value [comment]
// Keys are those listed by config_keys(); values are trimmed. Lists are
// comma-separated. Later settings override earlier ones; unknown keys and
// malformed values throw ContractViolation.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::string& path, TrainConfig base = {});
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);
// All settings in a form parse_config accepts.
std::vector<std::pair<std::string, std::string>> config_settings(const TrainConfig& cfg);
std::string config_to_text(const TrainConfig& cfg);
std::vector<std::string> config_keys();

// Learning rate at `step` of `total` steps: linear ramp from
// start_factor * base over the first warmup steps, then
// 0.5 * base * (1 + cos(pi * (step - warmup) / (total - warmup))).
double lr_schedule(std::int64_t step, std::int64_t total, std::int64_t warmup, double base,
                   double start_factor);

// Nesterov momentum in velocity form with the look-ahead gradient:
//   g' = g + wd * p      (weight group only)
//   v  = mu * v + g'
//   p -= lr * (g' + mu * v)
// Weights use lr_weights and weight decay; quantizer parameters use lr_quant;
// normalization parameters use lr_weights without decay. Velocities are keyed
// by parameter name.
struct OptimizerState {
  std::map<std::string, Tensor> velocity;
  std::int64_t step = 0;
};

struct StepRates {
  double lr_weights = 0.0;
  double lr_quant = 0.0;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

template <typename T>
void sgd_nesterov_step(std::vector<nn::Parameter<T>>& params, OptimizerState& state,
                       const StepRates& r) {
  for (auto& p : params) {
    auto it = state.velocity.find(p.name);
    if (it == state.velocity.end()) {
      it = state.velocity.emplace(p.name, Tensor(p.value->shape())).first;
    }
    Tensor& v = it->second;
    LCQ_CHECK(v.shape() == p.value->shape(), ShapeMismatch, "optimizer state shape for " + p.name);
    const bool is_weight = p.group == nn::ParamGroup::kWeights;
    const double lr = p.group == nn::ParamGroup::kQuantizer ? r.lr_quant : r.lr_weights;
    const double wd = is_weight ? r.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.value->numel(); ++i) {
      const double g = static_cast<double>((*p.grad)[i]) + wd * static_cast<double>((*p.value)[i]);
      const double vel = r.momentum * static_cast<double>(v[i]) + g;
      v[i] = static_cast<float>(vel);
      (*p.value)[i] = static_cast<T>(static_cast<double>((*p.value)[i]) - lr * (g + r.momentum * vel));
    }
  }
  ++state.step;
}

struct EvalResult {
  double loss = 0.0;
  double top1 = 0.0;  // percent
  int count = 0;
};

template <typename T>
EvalResult evaluate(nn::Layer<T>& model, const data::Dataset& ds, int batch_size,
                    bool use_lut = false);

struct MetricsRow {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double top1 = 0.0;
  double lr_w = 0.0;
  double lr_q = 0.0;
  std::vector<std::pair<std::string, double>> alphas;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  double final_test_top1 = 0.0;
  double best_test_top1 = 0.0;
  int best_epoch = 0;
};

// Train/test data for a config (loaded from disk or generated).
std::pair<data::Dataset, data::Dataset> load_datasets(const TrainConfig& cfg);

// Builds the model, loads cfg.init_checkpoint (matching tensors only) or
// resumes from `resume` (strict, including optimizer state and epoch), trains,
// and writes metrics.csv, last.ckpt and best.ckpt under cfg.output_dir.
TrainResult train(const TrainConfig& cfg, const data::Dataset& train_set,
                  const data::Dataset& test_set, const std::string& resume = "");

// Sets every enabled clip value to the given percentile of |input| on one
// batch (standardized weights for weight quantizers).
void calibrate_alphas(nn::Sequential<float>& model, const Tensor& batch, double percentile);

// CSV with header epoch,split,loss,top1,lr_w,lr_q,alpha:<quantizer>...
std::string metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace lcq

#endif  // LCQ_TRAINER_HPP_

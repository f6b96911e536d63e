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

#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "lcq/checkpoint.hpp"
#include "lcq/trainer.hpp"

namespace lcq {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lcq_trainer_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  return p;
}

TrainConfig synth_config(const std::string& out) {
  TrainConfig c;
  c.model.arch = "toy";
  c.model.in_channels = 8;
  c.model.image_size = 1;
  c.model.classes = 4;
  c.dataset = "synth";
  c.synth_dim = 8;
  c.synth_train = 256;
  c.synth_test = 64;
  c.plan.weight_bits = 3;
  c.plan.act_bits = 3;
  c.plan.intervals = 4;
  c.epochs = 2;
  c.batch_size = 32;
  c.lr_weights = 0.05;
  c.lr_quant = 0.01;
  c.output_dir = out;
  c.log_every = -1;
  return c;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TEST(LrSchedule, Examples) {
  EXPECT_DOUBLE_EQ(lr_schedule(0, 100, 10, 0.1, 0.1), 0.01);
  EXPECT_DOUBLE_EQ(lr_schedule(5, 100, 10, 0.1, 0.1), 0.01 + 0.09 * 0.5);
  EXPECT_DOUBLE_EQ(lr_schedule(10, 100, 10, 0.1, 0.1), 0.1);
  EXPECT_NEAR(lr_schedule(55, 100, 10, 0.1, 0.1), 0.05, 1e-15);
  EXPECT_NEAR(lr_schedule(100, 100, 10, 0.1, 0.1), 0.0, 1e-15);
  EXPECT_NEAR(lr_schedule(99, 100, 0, 0.1, 0.1), 0.05 * (1 + std::cos(std::numbers::pi * 0.99)), 1e-15);
  EXPECT_THROW(lr_schedule(0, 0, 0, 0.1, 0.1), ContractViolation);
  // Monotone non-increasing after warm-up.
  double prev = 1.0;
  for (int s = 10; s <= 100; ++s) {
    const double lr = lr_schedule(s, 100, 10, 0.1, 0.1);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(Nesterov, StepsFromRest) {
  Tensor w({2}, std::vector<float>{1.0f, -2.0f}), gw({2});
  Tensor a({1}, std::vector<float>{3.0f}), ga({1});
  std::vector<nn::Parameter<float>> ps{{"w", &w, &gw, nn::ParamGroup::kWeights},
                                       {"a", &a, &ga, nn::ParamGroup::kQuantizer}};
  OptimizerState st;
  const StepRates r{0.5, 0.25, 0.5, 0.0};
  // Zero gradient from rest: nothing moves.
  sgd_nesterov_step(ps, st, r);
  EXPECT_EQ(w[0], 1.0f);
  EXPECT_EQ(a[0], 3.0f);
  // First step: p -= lr (1 + mu) g.
  gw = Tensor({2}, std::vector<float>{1.0f, 2.0f});
  ga = Tensor({1}, std::vector<float>{4.0f});
  sgd_nesterov_step(ps, st, r);
  EXPECT_EQ(w[0], 1.0f - 0.5f * 1.5f * 1.0f);
  EXPECT_EQ(w[1], -2.0f - 0.5f * 1.5f * 2.0f);
  EXPECT_EQ(a[0], 3.0f - 0.25f * 1.5f * 4.0f);
  // Second step with g2: v2 = mu g1 + g2, p -= lr (g2 + mu v2).
  const float w0 = w[0];
  gw = Tensor({2}, std::vector<float>{-2.0f, 0.0f});
  sgd_nesterov_step(ps, st, r);
  const float v2 = 0.5f * 1.0f + -2.0f;
  EXPECT_EQ(w[0], w0 - 0.5f * (-2.0f + 0.5f * v2));
  EXPECT_EQ(st.step, 3);
}

TEST(Nesterov, WeightDecayOnlyOnWeights) {
  Tensor w({1}, std::vector<float>{2.0f}), gw({1});
  Tensor a({1}, std::vector<float>{2.0f}), ga({1});
  Tensor b({1}, std::vector<float>{2.0f}), gb({1});
  std::vector<nn::Parameter<float>> ps{{"w", &w, &gw, nn::ParamGroup::kWeights},
                                       {"a", &a, &ga, nn::ParamGroup::kQuantizer},
                                       {"bn", &b, &gb, nn::ParamGroup::kNorm}};
  OptimizerState st;
  sgd_nesterov_step(ps, st, StepRates{0.5, 0.5, 0.0, 0.25});
  EXPECT_EQ(w[0], 2.0f - 0.5f * 0.25f * 2.0f);
  EXPECT_EQ(a[0], 2.0f);
  EXPECT_EQ(b[0], 2.0f);
}

TEST(Config, ParseAndRoundTrip) {
  const TrainConfig c = parse_config(
      "# comment\n\narch = toy\nmethod=uniform  # trailing\nweight_bits=3\nnorm_mean = 0.1, 0.2,0.3\n"
      "lr_weights=0.5\nlr_weights=0.25\naugment=true\n");
  EXPECT_EQ(c.model.arch, "toy");
  EXPECT_EQ(c.plan.method, nn::Method::kUniform);
  EXPECT_EQ(c.plan.weight_bits, 3);
  EXPECT_EQ(c.norm.mean, (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_EQ(c.lr_weights, 0.25);
  EXPECT_TRUE(c.augment.enabled);
  const TrainConfig back = parse_config(config_to_text(c));
  EXPECT_EQ(config_settings(back), config_settings(c));
  TrainConfig d;
  apply_setting(d, "bits", "3/4");
  EXPECT_EQ(d.plan.weight_bits, 3);
  EXPECT_EQ(d.plan.act_bits, 4);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("bogus_key = 1\n"), ContractViolation);
  EXPECT_THROW(parse_config("epochs = three\n"), ContractViolation);
  EXPECT_THROW(parse_config("epochs\n"), ContractViolation);
  EXPECT_THROW(parse_config("method = magic\n"), ContractViolation);
  EXPECT_THROW(parse_config("augment = maybe\n"), ContractViolation);
  EXPECT_THROW(parse_config("norm_std = 0\n"), ContractViolation);
  EXPECT_THROW(load_config("/nonexistent/lcq.cfg"), std::exception);
}

TEST(Checkpoint, RoundTrip) {
  Checkpoint ck;
  ck.epoch = 3;
  ck.step = 42;
  ck.config = {{"arch", "toy"}, {"seed", "7"}};
  ck.quantizer_records = {"conv1 activation 3 8 2 1.5 0 0.25"};
  ck.quantizer_kinds = {{"conv1.aq", "companding"}};
  ck.tensors.emplace_back("conv1.weight", Tensor({2, 3}, std::vector<float>{1, 2, 3, 4, 5, -6.5f}));
  ck.tensors.emplace_back("opt.conv1.weight", Tensor({2, 3}, 0.5f));
  const fs::path dir = temp_dir("ck");
  fs::create_directories(dir);
  const std::string p = (dir / "a.ckpt").string();
  save_checkpoint(p, ck);
  const Checkpoint back = load_checkpoint(p);
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.quantizer_records, ck.quantizer_records);
  EXPECT_EQ(back.quantizer_kinds, ck.quantizer_kinds);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.find("conv1.weight")->vec(), ck.tensors[0].second.vec());
  EXPECT_EQ(back.find("missing"), nullptr);
  fs::resize_file(p, fs::file_size(p) - 4);
  EXPECT_THROW(load_checkpoint(p), FormatError);
  fs::remove_all(dir);
}

TEST(Checkpoint, ModelRestore) {
  nn::ModelConfig mc{"toy", 1, 4, 3};
  nn::QuantPlan plan;
  auto a = nn::build_model<float>(mc, plan);
  auto b = nn::build_model<float>(mc, plan);
  nn::init_weights(*a, 1);
  nn::init_weights(*b, 2);
  nn::quant_layers(*a)[0]->act_quantizer().theta()[1] = 0.75f;
  const Checkpoint ck = capture_model(*a);
  EXPECT_EQ(restore_model(*b, ck, true), static_cast<int>(ck.tensors.size()));
  EXPECT_EQ(nn::quant_layers(*b)[0]->weight().vec(), nn::quant_layers(*a)[0]->weight().vec());
  EXPECT_EQ(nn::quant_layers(*b)[0]->act_quantizer().theta()[1], 0.75f);
  Checkpoint partial = ck;
  partial.tensors.erase(partial.tensors.begin());
  EXPECT_THROW(restore_model(*b, partial, true), FormatError);
  EXPECT_NO_THROW(restore_model(*b, partial, false));
  auto other = nn::build_model<float>(nn::ModelConfig{"toy", 2, 4, 3}, plan);
  EXPECT_THROW(restore_model(*other, ck, false), ShapeMismatch);
}

TEST(Train, ThetaZeroStartMatchesUniformBaseline) {
  TrainConfig c = synth_config("");
  c.plan.outer_bits = 0;  // no re-quantization in either configuration
  TrainConfig u = c;
  u.plan.method = nn::Method::kUniform;
  c.plan.weight_bits = 3;
  auto lcq_model = nn::build_model<float>(c.model, c.plan);
  auto uni_model = nn::build_model<float>(u.model, u.plan);
  nn::init_weights(*lcq_model, 5);
  nn::init_weights(*uni_model, 5);
  const auto [tr, te] = load_datasets(c);
  std::vector<int> idx(32);
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor x = data::make_batch(tr, idx).images;
  EXPECT_EQ(lcq_model->forward(x, false).vec(), uni_model->forward(x, false).vec());
}

TEST(Train, SmokeDeterminismAndResume) {
  const fs::path d1 = temp_dir("a"), d2 = temp_dir("b"), d3 = temp_dir("c");
  TrainConfig c = synth_config(d1.string());
  c.epochs = 4;
  const auto [tr, te] = load_datasets(c);
  const TrainResult r1 = train(c, tr, te);
  ASSERT_EQ(r1.rows.size(), 8u);
  EXPECT_LT(r1.rows[6].loss, r1.rows[0].loss);  // train loss falls
  EXPECT_GT(r1.final_test_top1, 50.0);
  EXPECT_TRUE(fs::exists(d1 / "metrics.csv"));
  EXPECT_TRUE(fs::exists(d1 / "best.ckpt"));
  EXPECT_TRUE(fs::exists(d1 / "config.txt"));
  EXPECT_EQ(read_file(d1 / "metrics.csv").substr(0, 34), "epoch,split,loss,top1,lr_w,lr_q,al");

  // Same seed: bit-identical metrics.
  c.output_dir = d2.string();
  train(c, tr, te);
  EXPECT_EQ(read_file(d1 / "metrics.csv"), read_file(d2 / "metrics.csv"));

  // Interrupted after epoch 2, then resumed: same metrics and weights as the
  // uninterrupted run.
  TrainConfig part = c;
  part.output_dir = d3.string();
  part.stop_after_epoch = 2;
  const TrainResult first = train(part, tr, te);
  EXPECT_EQ(first.rows.size(), 4u);
  EXPECT_EQ(load_checkpoint((d3 / "last.ckpt").string()).epoch, 2);
  part.stop_after_epoch = 0;
  train(part, tr, te, (d3 / "last.ckpt").string());
  EXPECT_EQ(read_file(d1 / "metrics.csv"), read_file(d3 / "metrics.csv"));
  const Checkpoint a = load_checkpoint((d1 / "last.ckpt").string());
  const Checkpoint b = load_checkpoint((d3 / "last.ckpt").string());
  EXPECT_EQ(a.step, b.step);
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].first, b.tensors[i].first);
    EXPECT_EQ(a.tensors[i].second.vec(), b.tensors[i].second.vec()) << a.tensors[i].first;
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
}

TEST(Train, DeterministicOverManySteps) {
  const fs::path d1 = temp_dir("det1"), d2 = temp_dir("det2");
  TrainConfig c = synth_config(d1.string());
  c.synth_train = 640;
  c.batch_size = 16;
  c.epochs = 3;  // 120 steps
  c.save_checkpoints = false;
  const auto [tr, te] = load_datasets(c);
  train(c, tr, te);
  c.output_dir = d2.string();
  train(c, tr, te);
  EXPECT_EQ(read_file(d1 / "metrics.csv"), read_file(d2 / "metrics.csv"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Train, NonFiniteLossAborts) {
  const fs::path d = temp_dir("nan");
  TrainConfig c = synth_config(d.string());
  c.plan.method = nn::Method::kFloat;
  auto m = nn::build_model<float>(c.model, c.plan);
  nn::init_weights(*m, 1);
  nn::quant_layers(*m).back()->weight()[0] = std::numeric_limits<float>::quiet_NaN();
  fs::create_directories(d);
  save_checkpoint((d / "nan.ckpt").string(), capture_model(*m));
  c.init_checkpoint = (d / "nan.ckpt").string();
  const auto [tr, te] = load_datasets(c);
  EXPECT_THROW(train(c, tr, te), TrainingDiverged);
  EXPECT_TRUE(fs::exists(d / "nan_dump.txt"));
  fs::remove_all(d);
}

}  // namespace
}  // namespace lcq

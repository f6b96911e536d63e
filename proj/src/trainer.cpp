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

#include "lcq/trainer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "lcq/checkpoint.hpp"

namespace lcq {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  V out{};
  std::string rest;
  if (!(is >> out) || (is >> rest)) {
    throw ContractViolation("config: bad value '" + v + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ContractViolation("config: bad boolean '" + v + "' for " + key);
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  LCQ_CHECK(!out.empty(), ContractViolation, "config: empty list for " + key);
  return out;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt::format("{}", v[i]);
  return s;
}

struct Setting {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define LCQ_NUM(name, field, type)                                                       \
  Setting {                                                                              \
    name, [](TrainConfig& c, const std::string& v) { c.field = parse_number<type>(name, v); }, \
        [](const TrainConfig& c) { return fmt::format("{}", c.field); }                 \
  }
#define LCQ_STR(name, field)                                                \
  Setting {                                                                 \
    name, [](TrainConfig& c, const std::string& v) { c.field = v; },        \
        [](const TrainConfig& c) { return std::string(c.field); }           \
  }
#define LCQ_BOOL(name, field)                                                            \
  Setting {                                                                              \
    name, [](TrainConfig& c, const std::string& v) { c.field = parse_bool(name, v); },   \
        [](const TrainConfig& c) { return std::string(c.field ? "true" : "false"); }     \
  }

const std::vector<Setting>& settings() {
  static const std::vector<Setting> s = {
      LCQ_STR("arch", model.arch),
      LCQ_NUM("in_channels", model.in_channels, int),
      LCQ_NUM("image_size", model.image_size, int),
      LCQ_NUM("classes", model.classes, int),
      LCQ_NUM("width", model.width, int),
      Setting{"method",
              [](TrainConfig& c, const std::string& v) { c.plan.method = nn::parse_method(v); },
              [](const TrainConfig& c) { return std::string(nn::method_name(c.plan.method)); }},
      LCQ_NUM("weight_bits", plan.weight_bits, int),
      LCQ_NUM("act_bits", plan.act_bits, int),
      LCQ_NUM("outer_bits", plan.outer_bits, int),
      LCQ_NUM("edge_bits", plan.edge_bits, int),
      LCQ_NUM("intervals", plan.intervals, int),
      LCQ_NUM("alpha_w_init", plan.alpha_w_init, double),
      LCQ_NUM("alpha_a_init", plan.alpha_a_init, double),
      Setting{"theta_jacobian",
              [](TrainConfig& c, const std::string& v) {
                if (v == "diagonal") {
                  c.plan.jacobian = ThetaJacobian::kDiagonal;
                } else if (v == "full") {
                  c.plan.jacobian = ThetaJacobian::kFull;
                } else {
                  throw ContractViolation("config: theta_jacobian is diagonal or full");
                }
              },
              [](const TrainConfig& c) {
                return std::string(c.plan.jacobian == ThetaJacobian::kFull ? "full" : "diagonal");
              }},
      LCQ_STR("dataset", dataset),
      LCQ_STR("data_dir", data_dir),
      Setting{"norm_mean",
              [](TrainConfig& c, const std::string& v) { c.norm.mean = parse_list("norm_mean", v); },
              [](const TrainConfig& c) { return fmt_list(c.norm.mean); }},
      Setting{"norm_std",
              [](TrainConfig& c, const std::string& v) {
                c.norm.stddev = parse_list("norm_std", v);
                for (double s : c.norm.stddev)
                  LCQ_CHECK(s > 0, ContractViolation, "config: norm_std must be positive");
              },
              [](const TrainConfig& c) { return fmt_list(c.norm.stddev); }},
      LCQ_BOOL("augment", augment.enabled),
      LCQ_NUM("augment_pad", augment.pad, int),
      LCQ_BOOL("augment_flip", augment.flip),
      LCQ_NUM("train_limit", train_limit, int),
      LCQ_NUM("test_limit", test_limit, int),
      LCQ_NUM("synth_train", synth_train, int),
      LCQ_NUM("synth_test", synth_test, int),
      LCQ_NUM("synth_dim", synth_dim, int),
      LCQ_NUM("epochs", epochs, int),
      LCQ_NUM("batch_size", batch_size, int),
      LCQ_NUM("lr_weights", lr_weights, double),
      LCQ_NUM("lr_quant", lr_quant, double),
      LCQ_NUM("momentum", momentum, double),
      LCQ_NUM("weight_decay", weight_decay, double),
      LCQ_NUM("warmup_epochs", warmup_epochs, double),
      LCQ_NUM("warmup_start_factor", warmup_start_factor, double),
      LCQ_NUM("seed", seed, std::uint64_t),
      LCQ_STR("init_checkpoint", init_checkpoint),
      LCQ_NUM("alpha_calibration_percentile", alpha_calibration_percentile, double),
      LCQ_STR("output_dir", output_dir),
      LCQ_BOOL("save_checkpoints", save_checkpoints),
      LCQ_NUM("log_every", log_every, int),
      LCQ_NUM("stop_after_epoch", stop_after_epoch, int),
  };
  return s;
}

#undef LCQ_NUM
#undef LCQ_STR
#undef LCQ_BOOL

void validate(const TrainConfig& c) {
  LCQ_CHECK(c.epochs >= 0, ContractViolation, "config: epochs must be >= 0");
  LCQ_CHECK(c.batch_size >= 2, ContractViolation, "config: batch_size must be >= 2");
  LCQ_CHECK(c.lr_weights >= 0 && c.lr_quant >= 0, ContractViolation,
            "config: learning rates must be >= 0");
  LCQ_CHECK(c.momentum >= 0 && c.momentum < 1, ContractViolation, "config: momentum in [0, 1)");
  LCQ_CHECK(c.warmup_epochs >= 0 && c.warmup_epochs <= c.epochs, ContractViolation,
            "config: warmup_epochs in [0, epochs]");
  LCQ_CHECK(c.plan.alpha_w_init > 0 && c.plan.alpha_a_init > 0, ContractViolation,
            "config: initial clip values must be positive");
  LCQ_CHECK(c.alpha_calibration_percentile >= 0 && c.alpha_calibration_percentile <= 100,
            ContractViolation, "config: alpha_calibration_percentile in [0, 100]");
}

std::vector<std::pair<std::string, double>> alpha_summary(nn::Layer<float>& model) {
  std::vector<std::pair<std::string, double>> out;
  for (auto* q : nn::quant_layers(model)) {
    for (auto* u : {&q->weight_quantizer(), &q->act_quantizer()}) {
      if (u->enabled()) out.emplace_back(u->name(), u->alpha()[0]);
    }
  }
  return out;
}

void dump_quantizers(const std::string& path, nn::Layer<float>& model, int epoch, std::int64_t step,
                     double loss) {
  std::ofstream os(path);
  os << fmt::format("# non-finite loss {} at epoch {} step {}\n", loss, epoch, step);
  os << "# quantizer alpha theta...\n";
  for (auto* q : nn::quant_layers(model)) {
    for (auto* u : {&q->weight_quantizer(), &q->act_quantizer()}) {
      os << u->name() << ' ' << fmt::format("{:.17g}", u->alpha()[0]);
      for (float t : u->theta().span()) os << ' ' << fmt::format("{:.9g}", t);
      os << '\n';
    }
  }
}

std::string pick_existing(const std::string& base) {
  if (std::filesystem::exists(base + ".gz")) return base + ".gz";
  return base;
}

data::Dataset take(data::Dataset ds, int limit) {
  if (limit <= 0 || limit >= ds.size()) return ds;
  Shape s = ds.images.shape();
  const std::size_t per = ds.images.numel() / s[0];
  s[0] = limit;
  std::vector<float> v(ds.images.vec().begin(),
                       ds.images.vec().begin() + static_cast<std::ptrdiff_t>(per * limit));
  ds.images = Tensor(s, std::move(v));
  ds.labels.resize(limit);
  return ds;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& s : settings()) out.emplace_back(s.key);
  return out;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "bits") {
    const auto slash = value.find('/');
    LCQ_CHECK(slash != std::string::npos, ContractViolation, "config: bits is W/A, e.g. 2/2");
    cfg.plan.weight_bits = parse_number<int>(key, value.substr(0, slash));
    cfg.plan.act_bits = parse_number<int>(key, value.substr(slash + 1));
    return;
  }
  for (const auto& s : settings()) {
    if (key == s.key) {
      s.set(cfg, value);
      return;
    }
  }
  throw ContractViolation("config: unknown key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    LCQ_CHECK(eq != std::string::npos, ContractViolation,
              "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    LCQ_CHECK(!key.empty(), ContractViolation, "config line " + std::to_string(lineno) + ": empty key");
    apply_setting(base, key, value);
  }
  validate(base);
  return base;
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_settings(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : settings()) out.emplace_back(s.key, s.get(cfg));
  return out;
}

std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_settings(cfg)) out += k + " = " + v + "\n";
  return out;
}

double lr_schedule(std::int64_t step, std::int64_t total, std::int64_t warmup, double base,
                   double start_factor) {
  LCQ_CHECK(total > 0 && step >= 0 && warmup >= 0 && warmup <= total, ContractViolation,
            "lr_schedule: need 0 <= step, 0 <= warmup <= total, total > 0");
  if (step < warmup) {
    const double floor = start_factor * base;
    return floor + (base - floor) * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total == warmup) return base;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) /
                                            static_cast<double>(total - warmup));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
EvalResult evaluate(nn::Layer<T>& model, const data::Dataset& ds, int batch_size, bool use_lut) {
  EvalResult r;
  double loss_sum = 0.0;
  int correct = 0;
  std::vector<int> idx;
  for (int start = 0; start < ds.size(); start += batch_size) {
    const int n = std::min(batch_size, ds.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    data::Batch b = data::make_batch(ds, idx);
    const BasicTensor<T> x = b.images.cast<T>();
    const BasicTensor<T> logits = use_lut ? model.infer_lut(x) : model.forward(x, false);
    const auto l = nn::softmax_xent(logits, std::span<const int>(b.labels));
    loss_sum += l.loss * n;
    correct += l.correct;
  }
  r.count = ds.size();
  r.loss = r.count ? loss_sum / r.count : 0.0;
  r.top1 = r.count ? 100.0 * correct / r.count : 0.0;
  return r;
}

template EvalResult evaluate<float>(nn::Layer<float>&, const data::Dataset&, int, bool);
template EvalResult evaluate<double>(nn::Layer<double>&, const data::Dataset&, int, bool);

std::pair<data::Dataset, data::Dataset> load_datasets(const TrainConfig& cfg) {
  std::filesystem::path dir = cfg.data_dir;
  if (dir.is_relative()) dir = std::filesystem::path(data::data_root(".")) / dir;
  data::Dataset tr, te;
  if (cfg.dataset == "mnist") {
    tr = data::load_mnist_idx(pick_existing((dir / "train-images-idx3-ubyte").string()),
                              pick_existing((dir / "train-labels-idx1-ubyte").string()), cfg.norm,
                              "train");
    te = data::load_mnist_idx(pick_existing((dir / "t10k-images-idx3-ubyte").string()),
                              pick_existing((dir / "t10k-labels-idx1-ubyte").string()), cfg.norm,
                              "test");
  } else if (cfg.dataset == "cifar10") {
    std::vector<std::string> train_files;
    for (int i = 1; i <= 5; ++i) train_files.push_back((dir / fmt::format("data_batch_{}.bin", i)).string());
    tr = data::load_cifar10_bin(train_files, cfg.norm, "train");
    te = data::load_cifar10_bin({(dir / "test_batch.bin").string()}, cfg.norm, "test");
  } else if (cfg.dataset == "synth") {
    const int total = cfg.synth_train + cfg.synth_test;
    data::Dataset all = data::synth_classification(total, cfg.synth_dim, cfg.model.classes, cfg.seed);
    std::vector<int> a(cfg.synth_train), b(cfg.synth_test);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), cfg.synth_train);
    auto split = [&](const std::vector<int>& idx, const char* name) {
      data::Batch batch = data::make_batch(all, idx);
      data::Dataset ds;
      ds.images = std::move(batch.images);
      ds.labels = std::move(batch.labels);
      ds.classes = all.classes;
      ds.split = name;
      return ds;
    };
    tr = split(a, "train");
    te = split(b, "test");
  } else {
    throw ContractViolation("unknown dataset '" + cfg.dataset + "' (mnist, cifar10, synth)");
  }
  return {take(std::move(tr), cfg.train_limit), take(std::move(te), cfg.test_limit)};
}

void calibrate_alphas(nn::Sequential<float>& model, const Tensor& batch, double percentile) {
  model.forward(batch, false);
  auto pct = [&](std::vector<float> v) {
    for (float& x : v) x = std::abs(x);
    std::sort(v.begin(), v.end());
    const double pos = percentile / 100.0 * (v.size() - 1);
    return static_cast<double>(v[static_cast<std::size_t>(std::llround(pos))]);
  };
  for (auto* q : nn::quant_layers(model)) {
    auto& wq = q->weight_quantizer();
    auto& aq = q->act_quantizer();
    if (wq.enabled()) wq.alpha()[0] = static_cast<float>(std::max(pct(q->standardized_weights().vec()), nn::kMinAlpha));
    if (aq.enabled()) aq.alpha()[0] = static_cast<float>(std::max(pct(q->last_input().vec()), nn::kMinAlpha));
  }
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "epoch,split,loss,top1,lr_w,lr_q";
  if (!rows.empty()) {
    for (const auto& [name, a] : rows.front().alphas) out += ",alpha:" + name;
  }
  out += '\n';
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.6f},{:.4f},{:.6g},{:.6g}", r.epoch, r.split, r.loss, r.top1, r.lr_w,
                       r.lr_q);
    for (const auto& [name, a] : r.alphas) out += fmt::format(",{:.6g}", a);
    out += '\n';
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const data::Dataset& train_set,
                  const data::Dataset& test_set, const std::string& resume) {
  validate(cfg);
  LCQ_CHECK(train_set.size() >= cfg.batch_size, ContractViolation,
            "train: training set smaller than one batch");
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path out_dir(cfg.output_dir);
  std::ofstream(out_dir / "config.txt") << config_to_text(cfg);

  auto model = nn::build_model<float>(cfg.model, cfg.plan);
  nn::init_weights(*model, cfg.seed);
  OptimizerState opt;
  int start_epoch = 0;
  TrainResult result;

  if (!resume.empty()) {
    const Checkpoint ck = load_checkpoint(resume);
    restore_model(*model, ck, true);
    for (const auto& [name, t] : ck.tensors) {
      if (name.rfind("opt.", 0) == 0) opt.velocity[name.substr(4)] = t;
    }
    opt.step = ck.step;
    start_epoch = ck.epoch;
  } else if (!cfg.init_checkpoint.empty()) {
    restore_model(*model, load_checkpoint(cfg.init_checkpoint), false);
  }

  const int steps_per_epoch = train_set.size() / cfg.batch_size;
  const std::int64_t total = static_cast<std::int64_t>(steps_per_epoch) * cfg.epochs;
  const auto warmup = static_cast<std::int64_t>(std::llround(cfg.warmup_epochs * steps_per_epoch));

  if (resume.empty() && cfg.alpha_calibration_percentile > 0 && cfg.plan.method != nn::Method::kFloat) {
    std::vector<int> idx(cfg.batch_size);
    std::iota(idx.begin(), idx.end(), 0);
    calibrate_alphas(*model, data::make_batch(train_set, idx).images, cfg.alpha_calibration_percentile);
  }

  auto params = nn::parameters(*model);
  std::vector<int> perm(train_set.size());
  StepRates rates;
  rates.momentum = cfg.momentum;
  rates.weight_decay = cfg.weight_decay;
  const std::string metrics_path = (out_dir / "metrics.csv").string();
  // On resume, rows of earlier epochs are kept from the existing file.
  std::string previous;
  if (start_epoch > 0 && std::filesystem::exists(metrics_path)) {
    std::ifstream is(metrics_path);
    std::stringstream old;
    old << is.rdbuf();
    previous = old.str();
  }
  auto write_metrics = [&] {
    std::string csv = metrics_csv(result.rows);
    if (!previous.empty()) csv = previous + csv.substr(csv.find('\n') + 1);
    std::ofstream(metrics_path) << csv;
  };

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    // Per-epoch stream so a resumed run sees the same batches.
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    double loss_sum = 0.0;
    int correct = 0, seen = 0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      std::span<const int> idx(perm.data() + static_cast<std::size_t>(s) * cfg.batch_size,
                               cfg.batch_size);
      data::Batch b = data::make_batch(train_set, idx);
      for (int i = 0; i < cfg.batch_size; ++i) data::augment(b.images, i, cfg.augment, rng);
      nn::zero_grads(*model);
      const Tensor logits = model->forward(b.images, true);
      auto l = nn::softmax_xent(logits, std::span<const int>(b.labels));
      if (!std::isfinite(l.loss)) {
        const std::string dump = (out_dir / "nan_dump.txt").string();
        dump_quantizers(dump, *model, epoch, opt.step, l.loss);
        throw TrainingDiverged(fmt::format("non-finite loss at epoch {} step {}; quantizer states in {}",
                                           epoch + 1, opt.step, dump));
      }
      model->backward(l.dlogits);
      rates.lr_weights = lr_schedule(opt.step, total, warmup, cfg.lr_weights, cfg.warmup_start_factor);
      rates.lr_quant = lr_schedule(opt.step, total, warmup, cfg.lr_quant, cfg.warmup_start_factor);
      sgd_nesterov_step(params, opt, rates);
      loss_sum += l.loss * cfg.batch_size;
      correct += l.correct;
      seen += cfg.batch_size;
      if (cfg.log_every > 0 && (s + 1) % cfg.log_every == 0) {
        std::cerr << fmt::format("epoch {} step {}/{} loss {:.4f}\n", epoch + 1, s + 1,
                                 steps_per_epoch, loss_sum / seen);
      }
    }
    const auto alphas = alpha_summary(*model);
    MetricsRow tr{epoch + 1, "train", loss_sum / seen, 100.0 * correct / seen, rates.lr_weights,
                  rates.lr_quant, alphas};
    const EvalResult ev = evaluate(*model, test_set, 256);
    MetricsRow te{epoch + 1, "test", ev.loss, ev.top1, rates.lr_weights, rates.lr_quant, alphas};
    result.rows.push_back(tr);
    result.rows.push_back(te);
    result.final_test_top1 = ev.top1;
    const bool best = result.best_epoch == 0 || ev.top1 > result.best_test_top1;
    if (best) {
      result.best_test_top1 = ev.top1;
      result.best_epoch = epoch + 1;
    }
    if (cfg.log_every >= 0) {
      std::cerr << fmt::format("epoch {} train loss {:.4f} top1 {:.2f} | test loss {:.4f} top1 {:.2f}\n",
                               epoch + 1, tr.loss, tr.top1, ev.loss, ev.top1);
    }

    write_metrics();
    if (cfg.save_checkpoints) {
      Checkpoint ck = capture_model(*model);
      ck.epoch = epoch + 1;
      ck.step = opt.step;
      for (const auto& [k, v] : config_settings(cfg)) ck.config[k] = v;
      for (const auto& [name, v] : opt.velocity) ck.tensors.emplace_back("opt." + name, v);
      save_checkpoint((out_dir / "last.ckpt").string(), ck);
      if (best) save_checkpoint((out_dir / "best.ckpt").string(), ck);
    }
    if (cfg.stop_after_epoch > 0 && epoch + 1 >= cfg.stop_after_epoch) break;
  }

  return result;
}

}  // namespace lcq

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

// lcq: train, evaluate, verify and export companding-quantized networks.
//
// Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime
// failure.

#include <CLI/CLI.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lcq/checkpoint.hpp"
#include "lcq/lut.hpp"
#include "lcq/trainer.hpp"
#include "lcq/verify.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerify = 2;
constexpr int kExitRuntime = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config file, then --set overrides, then dedicated flags.
struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::int64_t seed = -1;
  std::string bits;
  std::string method;
  std::string resume;
  std::string output_dir;
};

void apply_sets(lcq::TrainConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    try {
      lcq::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    } catch (const lcq::ContractViolation& e) {
      throw UsageError(e.what());
    }
  }
}

lcq::TrainConfig assemble_config(const TrainArgs& a) {
  lcq::TrainConfig cfg;
  try {
    cfg = lcq::load_config(a.config);
  } catch (const lcq::ContractViolation& e) {
    throw UsageError(a.config + ": " + e.what());
  }
  apply_sets(cfg, a.sets);
  try {
    if (a.seed >= 0) lcq::apply_setting(cfg, "seed", std::to_string(a.seed));
    if (!a.bits.empty()) lcq::apply_setting(cfg, "bits", a.bits);
    if (!a.method.empty()) lcq::apply_setting(cfg, "method", a.method);
    if (!a.output_dir.empty()) lcq::apply_setting(cfg, "output_dir", a.output_dir);
  } catch (const lcq::ContractViolation& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int run_train(const TrainArgs& a) {
  const lcq::TrainConfig cfg = assemble_config(a);
  auto [tr, te] = lcq::load_datasets(cfg);
  const lcq::TrainResult r = lcq::train(cfg, tr, te, a.resume);
  std::cout << fmt::format("method={} bits={}/{} seed={} final_test_top1={:.2f} best_test_top1={:.2f} "
                           "best_epoch={} output_dir={}\n",
                           lcq::nn::method_name(cfg.plan.method), cfg.plan.weight_bits,
                           cfg.plan.act_bits, cfg.seed, r.final_test_top1, r.best_test_top1,
                           r.best_epoch, cfg.output_dir);
  return kExitOk;
}

lcq::TrainConfig config_from_checkpoint(const lcq::Checkpoint& ck) {
  lcq::TrainConfig cfg;
  for (const auto& [k, v] : ck.config) lcq::apply_setting(cfg, k, v);
  return cfg;
}

// Writes, per companding quantizer, samples of the normalized quantizer curve
// q(v) over each of its K intervals: columns v_1,q_1,...,v_K,q_K.
void emit_curves(lcq::nn::Layer<float>& model, const std::string& dir, int samples) {
  fs::create_directories(dir);
  for (auto* layer : lcq::nn::quant_layers(model)) {
    for (auto* u : {&layer->weight_quantizer(), &layer->act_quantizer()}) {
      if (!u->enabled()) continue;
      u->refresh();
      const lcq::CompandingState& st = u->state();
      const int K = st.intervals();
      const auto d = st.breakpoints();
      std::ofstream os(fs::path(dir) / (u->name() + ".csv"));
      for (int k = 0; k < K; ++k) os << (k ? "," : "") << "v_" << k + 1 << ",q_" << k + 1;
      os << "\n";
      for (int n = 0; n < samples; ++n) {
        for (int k = 0; k < K; ++k) {
          const double v = d[k] + (d[k + 1] - d[k]) * n / samples;
          const double q = lcq::normalized_output(v, st, u->spec());
          os << (k ? "," : "") << fmt::format("{:.9g},{:.9g}", v, q);
        }
        os << "\n";
      }
    }
  }
}

int run_eval(const std::string& ckpt_path, const std::vector<std::string>& sets,
             const std::string& curves_dir, int curve_samples, int batch_size, double tol) {
  if (!fs::exists(ckpt_path)) throw std::runtime_error("checkpoint not found: " + ckpt_path);
  const lcq::Checkpoint ck = lcq::load_checkpoint(ckpt_path);
  lcq::TrainConfig cfg = config_from_checkpoint(ck);
  apply_sets(cfg, sets);

  auto model = lcq::nn::build_model<float>(cfg.model, cfg.plan);
  lcq::restore_model(*model, ck, true);
  if (!curves_dir.empty()) emit_curves(*model, curves_dir, curve_samples);

  auto data = lcq::load_datasets(cfg);
  const lcq::data::Dataset& test = data.second;
  const lcq::EvalResult f32 = lcq::evaluate(*model, test, batch_size);
  std::cout << fmt::format("float32 path: top1 {:.2f} loss {:.4f} ({} images)\n", f32.top1, f32.loss,
                           f32.count);
  if (cfg.plan.method == lcq::nn::Method::kFloat) {
    std::cout << "LUT path: not applicable (full-precision model)\n";
    return kExitOk;
  }

  // Float and LUT paths compared in double precision.
  auto m64 = lcq::nn::build_model<double>(cfg.model, cfg.plan);
  lcq::nn::copy_state(*m64, *model);
  double worst = 0.0;
  int agree_top1 = 0, correct_float = 0, correct_lut = 0;
  std::vector<int> idx;
  for (int start = 0; start < test.size(); start += batch_size) {
    const int n = std::min(batch_size, test.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const lcq::data::Batch b = lcq::data::make_batch(test, idx);
    const lcq::Tensor64 x = b.images.cast<double>();
    const lcq::Tensor64 ref = m64->forward(x, false);
    const lcq::Tensor64 lut = m64->infer_lut(x);
    double mean_abs = 0.0;
    for (double v : ref.span()) mean_abs += std::abs(v);
    mean_abs /= static_cast<double>(ref.numel());
    for (std::size_t i = 0; i < ref.numel(); ++i) {
      worst = std::max(worst, std::abs(lut[i] - ref[i]) / std::max(std::abs(ref[i]), mean_abs));
    }
    const int C = ref.dim(1);
    for (int i = 0; i < n; ++i) {
      auto argmax = [&](const lcq::Tensor64& t) {
        const double* p = t.data() + static_cast<std::size_t>(i) * C;
        return static_cast<int>(std::max_element(p, p + C) - p);
      };
      const int pf = argmax(ref), pl = argmax(lut);
      agree_top1 += pf == pl;
      correct_float += pf == b.labels[i];
      correct_lut += pl == b.labels[i];
    }
  }
  const double pct = 100.0 / std::max(1, test.size());
  std::cout << fmt::format("float64 path: top1 {:.2f}\n", correct_float * pct);
  std::cout << fmt::format("LUT path:     top1 {:.2f}\n", correct_lut * pct);
  std::cout << fmt::format("max relative logit difference {:.3e} (tolerance {:.0e}), prediction "
                           "agreement {}/{}\n",
                           worst, tol, agree_top1, test.size());
  if (!(worst < tol)) {
    std::cerr << "error: float and LUT paths disagree\n";
    return kExitVerify;
  }
  return kExitOk;
}

int print_checks(const std::vector<lcq::verify::CheckResult>& results, const std::string& csv_path) {
  const std::string csv = lcq::verify::results_csv(results);
  std::cout << csv;
  if (!csv_path.empty()) std::ofstream(csv_path) << csv;
  for (const auto& r : results) {
    if (!r.passed) {
      std::cerr << fmt::format("FAIL {}: max error {:.3e} >= {:.1e} {}\n", r.name, r.max_error,
                               r.tolerance, r.detail);
    }
  }
  return lcq::verify::all_passed(results) ? kExitOk : kExitVerify;
}

int run_lut_export(const std::string& ckpt_path, const std::string& out_dir) {
  if (!fs::exists(ckpt_path)) throw std::runtime_error("checkpoint not found: " + ckpt_path);
  const lcq::Checkpoint ck = lcq::load_checkpoint(ckpt_path);
  const lcq::TrainConfig cfg = config_from_checkpoint(ck);
  if (cfg.plan.method == lcq::nn::Method::kFloat) {
    throw UsageError("lut export: checkpoint holds a full-precision model");
  }
  auto model = lcq::nn::build_model<float>(cfg.model, cfg.plan);
  lcq::restore_model(*model, ck, true);
  fs::create_directories(out_dir);
  std::vector<lcq::EncodedLayer> encoded;
  std::cout << "layer,b_w,b_a,code_bits_w,code_bits_a,m,bytes\n";
  for (auto* q : lcq::nn::quant_layers(*model)) {
    auto& wq = q->weight_quantizer();
    auto& aq = q->act_quantizer();
    const lcq::WeightStats stats = lcq::weight_stats(q->weight());
    const lcq::Lut lut = q->build_layer_lut(stats);
    lcq::save_lut((fs::path(out_dir) / (q->name() + ".lut")).string(), lut);
    lcq::EncodedLayer el;
    el.record_line = wq.record(q->name()).to_line();
    el.weights = lcq::encode_tensor(lcq::standardize(q->weight(), stats), wq.state(), wq.spec(),
                                    wq.kind());
    encoded.push_back(std::move(el));
    std::cout << fmt::format("{},{},{},{},{},{},{:.1f}\n", q->name(), wq.spec().bits,
                             aq.spec().bits, lut.outer_bits_w, lut.outer_bits_a,
                             lut.element_count(), lut.memory_bytes());
  }
  lcq::save_encoded_model((fs::path(out_dir) / "model.lcqe").string(), encoded);
  return kExitOk;
}

// report: final test accuracy per run directory, grouped by configuration.
struct RunSummary {
  std::string method;
  int bw = 0, ba = 0, outer = 0;
  std::uint64_t seed = 0;
  double final_top1 = 0.0;
};

RunSummary summarize_run(const fs::path& dir) {
  RunSummary s;
  const lcq::TrainConfig cfg = lcq::load_config((dir / "config.txt").string());
  s.method = lcq::nn::method_name(cfg.plan.method);
  s.bw = cfg.plan.weight_bits;
  s.ba = cfg.plan.act_bits;
  s.outer = cfg.plan.outer_bits;
  s.seed = cfg.seed;
  std::ifstream is(dir / "metrics.csv");
  if (!is) throw std::runtime_error("missing metrics.csv in " + dir.string());
  std::string line;
  std::getline(is, line);
  bool found = false;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string epoch, split, loss, top1;
    std::getline(ss, epoch, ',');
    std::getline(ss, split, ',');
    std::getline(ss, loss, ',');
    std::getline(ss, top1, ',');
    if (split == "test") {
      s.final_top1 = std::stod(top1);
      found = true;
    }
  }
  if (!found) throw std::runtime_error("no test rows in " + (dir / "metrics.csv").string());
  return s;
}

int run_report(const std::vector<std::string>& dirs, const std::string& csv_path) {
  std::vector<fs::path> runs;
  for (const auto& d : dirs) {
    if (fs::exists(fs::path(d) / "metrics.csv")) {
      runs.emplace_back(d);
      continue;
    }
    if (!fs::is_directory(d)) throw UsageError("not a run directory: " + d);
    for (const auto& e : fs::recursive_directory_iterator(d)) {
      if (e.is_regular_file() && e.path().filename() == "metrics.csv") runs.push_back(e.path().parent_path());
    }
  }
  if (runs.empty()) throw UsageError("report: no runs found");
  std::sort(runs.begin(), runs.end());

  struct Group {
    std::vector<double> acc;
  };
  std::map<std::string, Group> groups;
  std::map<std::string, std::string> bits_of;
  for (const auto& r : runs) {
    const RunSummary s = summarize_run(r);
    const std::string bits = s.method == "fp" ? "32/32" : fmt::format("{}/{}", s.bw, s.ba);
    const std::string outer = s.method == "fp" ? "-" : std::to_string(s.outer);
    const std::string key = fmt::format("{},{},{}", s.method, bits, outer);
    groups[key].acc.push_back(s.final_top1);
  }
  auto mean_of = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  std::string csv = "method,bits,outer_bits,runs,mean_top1,std_top1,min_top1,max_top1\n";
  std::cout << fmt::format("{:<12} {:>6} {:>6} {:>5} {:>9} {:>7} {:>8} {:>8}\n", "method", "W/A",
                           "b'", "runs", "mean", "std", "min", "max");
  for (const auto& [key, g] : groups) {
    const double m = mean_of(g.acc);
    double var = 0.0;
    for (double a : g.acc) var += (a - m) * (a - m);
    const double sd = g.acc.size() > 1 ? std::sqrt(var / (g.acc.size() - 1)) : 0.0;
    const auto [lo, hi] = std::minmax_element(g.acc.begin(), g.acc.end());
    std::stringstream ks(key);
    std::string method, bits, outer;
    std::getline(ks, method, ',');
    std::getline(ks, bits, ',');
    std::getline(ks, outer, ',');
    std::cout << fmt::format("{:<12} {:>6} {:>6} {:>5} {:>9.2f} {:>7.2f} {:>8.2f} {:>8.2f}\n", method,
                             bits, outer, g.acc.size(), m, sd, *lo, *hi);
    csv += fmt::format("{},{},{},{},{:.4f},{:.4f},{:.4f},{:.4f}\n", method, bits, outer,
                       g.acc.size(), m, sd, *lo, *hi);
  }
  // Paired differences against LCQ at the same bit-widths and b'.
  bool header = false;
  for (const auto& [key, g] : groups) {
    if (key.rfind("lcq,", 0) != 0) continue;
    const std::string rest = key.substr(4);
    for (const char* other : {"uniform", "lcq-no-lwn"}) {
      auto it = groups.find(std::string(other) + "," + rest);
      if (it == groups.end()) continue;
      if (!header) {
        std::cout << "\nmean differences\n";
        header = true;
      }
      std::cout << fmt::format("lcq - {:<11} at {}: {:+.2f}\n", other, rest,
                               mean_of(g.acc) - mean_of(it->second.acc));
    }
    for (const auto& [fk, fg] : groups) {
      if (fk.rfind("fp,", 0) != 0) continue;
      if (!header) {
        std::cout << "\nmean differences\n";
        header = true;
      }
      std::cout << fmt::format("lcq - fp          at {}: {:+.2f}\n", rest,
                               mean_of(g.acc) - mean_of(fg.acc));
    }
  }
  if (!csv_path.empty()) std::ofstream(csv_path) << csv;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Companding-quantized network training and lookup-table inference"};
  app.require_subcommand(1);

  TrainArgs targs;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", targs.config, "Config file (key = value lines)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--set", targs.sets, "Override a config setting, key=value (repeatable)");
  train->add_option("--seed", targs.seed, "Random seed")->check(CLI::NonNegativeNumber);
  train->add_option("--bits", targs.bits, "Weight/activation bit-widths, e.g. 2/2");
  train->add_option("--method", targs.method, "lcq, uniform, lcq-no-lwn or fp")
      ->check(CLI::IsMember({"lcq", "uniform", "lcq-no-lwn", "fp"}));
  train->add_option("--resume", targs.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_option("--output-dir", targs.output_dir, "Run directory (overrides output_dir)");

  std::string eval_ckpt, curves_dir;
  std::vector<std::string> eval_sets;
  int curve_samples = 32, eval_batch = 256;
  double eval_tol = 1e-5;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the float and LUT paths");
  eval->add_option("checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--set", eval_sets, "Override a config setting, key=value (repeatable)");
  eval->add_option("--emit-curves", curves_dir, "Write quantizer curve samples (CSV) to this directory");
  eval->add_option("--curve-samples", curve_samples, "Samples per interval")->check(CLI::PositiveNumber);
  eval->add_option("--batch-size", eval_batch, "Evaluation batch size")->check(CLI::PositiveNumber);
  eval->add_option("--tolerance", eval_tol, "Max relative logit difference between paths");

  std::uint64_t gc_seed = 1;
  std::string gc_csv;
  auto* gradcheck = app.add_subcommand("gradcheck", "Run the gradient verification suite");
  gradcheck->add_option("--seed", gc_seed, "Random seed");
  gradcheck->add_option("--csv", gc_csv, "Also write the results CSV here");

  auto* lut = app.add_subcommand("lut", "Lookup-table export, checks and size");
  lut->require_subcommand(1);
  std::string lx_ckpt, lx_out = "lut_export";
  auto* lut_export = lut->add_subcommand("export", "Write per-layer LUTs and encoded weights");
  lut_export->add_option("checkpoint", lx_ckpt, "Checkpoint file")->required();
  lut_export->add_option("--out", lx_out, "Output directory");
  std::uint64_t lc_seed = 1;
  std::string lc_csv;
  auto* lut_check = lut->add_subcommand("check", "LUT path against the float path");
  lut_check->add_option("--seed", lc_seed, "Random seed");
  lut_check->add_option("--csv", lc_csv, "Also write the results CSV here");
  int ls_bw = 0, ls_ba = 0, ls_obw = 0, ls_oba = 0;
  auto* lut_size = lut->add_subcommand("size", "LUT memory in bytes");
  lut_size->add_option("--bw", ls_bw, "Weight bit-width")->required()->check(CLI::Range(2, 15));
  lut_size->add_option("--ba", ls_ba, "Activation bit-width")->required()->check(CLI::Range(1, 15));
  lut_size->add_option("--obw", ls_obw, "Weight code bit-width b'")->required()->check(CLI::Range(1, 16));
  lut_size->add_option("--oba", ls_oba, "Activation code bit-width b'")->required()->check(CLI::Range(1, 16));

  std::vector<std::string> report_dirs;
  std::string report_csv;
  auto* report = app.add_subcommand("report", "Compare runs (LCQ vs uniform vs no-LWN)");
  report->add_option("runs", report_dirs, "Run directories or roots to search")->required();
  report->add_option("--csv", report_csv, "Also write the summary CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return run_train(targs);
    if (*eval) return run_eval(eval_ckpt, eval_sets, curves_dir, curve_samples, eval_batch, eval_tol);
    if (*gradcheck) return print_checks(lcq::verify::run_gradcheck_suite(gc_seed), gc_csv);
    if (*lut_export) return run_lut_export(lx_ckpt, lx_out);
    if (*lut_check) return print_checks(lcq::verify::run_lut_suite(lc_seed), lc_csv);
    if (*lut_size) {
      std::cout << fmt::format("{:.1f}\n", lcq::lut_memory_bytes(ls_bw, ls_ba, ls_obw, ls_oba));
      return kExitOk;
    }
    if (*report) return run_report(report_dirs, report_csv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lcq::ConsistencyError& e) {
    std::cerr << "verification error: " << e.what() << "\n";
    return kExitVerify;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

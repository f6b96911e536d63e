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

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "lcq/data.hpp"

namespace lcq::data {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("lcq_data_" + std::to_string(::getpid()) + "_" + name);
}

IdxArray sample_images(int n) {
  IdxArray a;
  a.dims = {n, 3, 2};
  for (int i = 0; i < n * 6; ++i) a.data.push_back(static_cast<std::uint8_t>((i * 37) % 256));
  return a;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

TEST(Idx, RoundTripPlainAndGzip) {
  const IdxArray a = sample_images(4);
  for (bool gz : {false, true}) {
    const fs::path p = temp_file(gz ? "a.gz" : "a.idx");
    write_idx(p.string(), a, gz);
    const IdxArray b = read_idx(p.string());
    EXPECT_EQ(b.dims, a.dims);
    EXPECT_EQ(b.data, a.data);
    fs::remove(p);
  }
}

TEST(Idx, RejectsCorruptFiles) {
  const fs::path p = temp_file("bad.idx");
  write_bytes(p, {0, 0, 8, 1, 0, 0, 0, 5, 1, 2, 3});  // claims 5 bytes, has 3
  EXPECT_THROW(read_idx(p.string()), FormatError);
  write_bytes(p, {1, 0, 8, 1, 0, 0, 0, 1, 9});  // bad magic
  EXPECT_THROW(read_idx(p.string()), FormatError);
  write_bytes(p, {0, 0, 0x0D, 1, 0, 0, 0, 1, 0, 0, 0, 0});  // float payload
  EXPECT_THROW(read_idx(p.string()), FormatError);
  write_bytes(p, {0, 0});
  EXPECT_THROW(read_idx(p.string()), FormatError);
  fs::remove(p);
  EXPECT_THROW(read_idx(p.string()), std::runtime_error);
}

TEST(Mnist, LoadsAndNormalizes) {
  IdxArray img;
  img.dims = {2, 2, 2};
  img.data = {0, 255, 51, 102, 0, 0, 0, 255};
  IdxArray lab;
  lab.dims = {2};
  lab.data = {7, 3};
  const fs::path pi = temp_file("img.gz"), pl = temp_file("lab.gz");
  write_idx(pi.string(), img, true);
  write_idx(pl.string(), lab, true);
  Normalization norm{{0.5}, {0.25}};
  const Dataset ds = load_mnist_idx(pi.string(), pl.string(), norm, "train");
  EXPECT_EQ(ds.size(), 2);
  EXPECT_EQ(ds.images.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(ds.labels, (std::vector<int>{7, 3}));
  EXPECT_FLOAT_EQ(ds.images[0], -2.0f);
  EXPECT_FLOAT_EQ(ds.images[1], 2.0f);
  EXPECT_FLOAT_EQ(ds.images[2], (0.2f - 0.5f) / 0.25f);
  lab.dims = {3};
  lab.data = {1, 2, 3};
  write_idx(pl.string(), lab, false);
  EXPECT_THROW(load_mnist_idx(pi.string(), pl.string()), FormatError);
  fs::remove(pi);
  fs::remove(pl);
}

TEST(Mnist, BundledSubsetIsReadable) {
  const fs::path dir = fs::path(LCQ_SOURCE_DIR) / "data" / "mnist";
  const Dataset te = load_mnist_idx((dir / "t10k-images-idx3-ubyte.gz").string(),
                                    (dir / "t10k-labels-idx1-ubyte.gz").string());
  EXPECT_EQ(te.size(), 2000);
  EXPECT_EQ(te.images.shape(), (Shape{2000, 1, 28, 28}));
  std::map<int, int> counts;
  for (int l : te.labels) ++counts[l];
  EXPECT_EQ(counts.size(), 10u);
}

TEST(Cifar, RecordsLabelsAndCorruption) {
  std::vector<std::uint8_t> raw;
  for (int r = 0; r < 3; ++r) {
    raw.push_back(static_cast<std::uint8_t>(r * 4));
    for (int i = 0; i < 3072; ++i) raw.push_back(static_cast<std::uint8_t>((i + r) % 256));
  }
  const fs::path p = temp_file("c.bin");
  write_bytes(p, raw);
  const Dataset ds = load_cifar10_bin({p.string(), p.string()});
  EXPECT_EQ(ds.size(), 6);
  EXPECT_EQ(ds.images.shape(), (Shape{6, 3, 32, 32}));
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 4, 8, 0, 4, 8}));
  EXPECT_FLOAT_EQ(ds.images.at4(1, 0, 0, 0), 1.0f / 255.0f);  // byte (0 + 1) % 256
  EXPECT_FLOAT_EQ(ds.images.at4(0, 2, 31, 31), 255.0f / 255.0f);
  raw.pop_back();
  write_bytes(p, raw);
  EXPECT_THROW(load_cifar10_bin({p.string()}), FormatError);
  raw.push_back(0);
  raw[0] = 12;
  write_bytes(p, raw);
  EXPECT_THROW(load_cifar10_bin({p.string()}), FormatError);
  fs::remove(p);
}

Tensor ramp_images(int n) {
  Tensor t({n, 2, 5, 5});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i + 1);
  return t;
}

TEST(Augment, DisabledIsIdentity) {
  Tensor t = ramp_images(2);
  const Tensor ref = t;
  std::mt19937_64 rng(1);
  augment(t, 1, AugmentOptions{false, 4, true}, rng);
  EXPECT_EQ(t.vec(), ref.vec());
}

TEST(Augment, FlipTwiceAndShifts) {
  Tensor t = ramp_images(2);
  const Tensor ref = t;
  flip_horizontal(t, 0);
  EXPECT_EQ(t.at4(0, 1, 2, 0), ref.at4(0, 1, 2, 4));
  EXPECT_EQ(t.at4(1, 0, 0, 0), ref.at4(1, 0, 0, 0));
  flip_horizontal(t, 0);
  EXPECT_EQ(t.vec(), ref.vec());
  shift_image(t, 0, 1, -2);
  // Output pixel (y, x) reads input (y + dy, x + dx).
  EXPECT_EQ(t.at4(0, 0, 1, 2), ref.at4(0, 0, 2, 0));
  EXPECT_EQ(t.at4(0, 0, 0, 0), 0.0f);
  EXPECT_EQ(t.at4(0, 0, 4, 4), 0.0f);
}

TEST(Augment, BoundedOffsetsAndDeterminism) {
  const AugmentOptions opt{true, 2, true};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Tensor a = ramp_images(1), b = ramp_images(1);
    std::mt19937_64 r1(seed), r2(seed);
    augment(a, 0, opt, r1);
    augment(b, 0, opt, r2);
    EXPECT_EQ(a.vec(), b.vec());
    // With |offset| <= 2 on a 5x5 image the centre pixel always survives as
    // some pixel from the central 5x5 window, never padding.
    EXPECT_NE(a.at4(0, 0, 2, 2), 0.0f);
  }
}

TEST(Synth, BalancedSeparableDeterministic) {
  const Dataset a = synth_classification(400, 6, 4, 3);
  const Dataset b = synth_classification(400, 6, 4, 3);
  const Dataset c = synth_classification(400, 6, 4, 4);
  EXPECT_EQ(a.images.vec(), b.images.vec());
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images.vec(), c.images.vec());
  EXPECT_EQ(a.images.shape(), (Shape{400, 6, 1, 1}));
  std::map<int, int> counts;
  for (int l : a.labels) ++counts[l];
  for (const auto& [k, n] : counts) EXPECT_EQ(n, 100) << k;
  // Nearest class mean classifies most points correctly.
  std::vector<std::vector<double>> mean(4, std::vector<double>(6, 0.0));
  for (int i = 0; i < 400; ++i)
    for (int d = 0; d < 6; ++d) mean[a.labels[i]][d] += a.images[i * 6 + d] / 100.0;
  int correct = 0;
  for (int i = 0; i < 400; ++i) {
    int best = 0;
    double bd = 1e300;
    for (int k = 0; k < 4; ++k) {
      double s = 0.0;
      for (int d = 0; d < 6; ++d) s += (a.images[i * 6 + d] - mean[k][d]) * (a.images[i * 6 + d] - mean[k][d]);
      if (s < bd) bd = s, best = k;
    }
    correct += best == a.labels[i];
  }
  EXPECT_GT(correct, 360);
  EXPECT_THROW(synth_classification(401, 6, 4, 3), ContractViolation);
}

TEST(Batch, CopiesSelectedSamples) {
  const Dataset a = synth_classification(40, 3, 4, 5);
  const std::vector<int> idx{5, 0, 39};
  const Batch b = make_batch(a, idx);
  EXPECT_EQ(b.images.shape(), (Shape{3, 3, 1, 1}));
  EXPECT_EQ(b.labels, (std::vector<int>{a.labels[5], a.labels[0], a.labels[39]}));
  EXPECT_EQ(b.images[3], a.images[0]);
  EXPECT_EQ(b.images[8], a.images[39 * 3 + 2]);
}

}  // namespace
}  // namespace lcq::data

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

#ifndef LCQ_DATA_HPP_
#define LCQ_DATA_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lcq/tensor.hpp"

namespace lcq::data {

// Images (N, C, H, W) as float and one label per image.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int classes = 0;
  std::string split;

  int size() const { return static_cast<int>(labels.size()); }
};

// Per-channel normalization applied at load time: (x / 255 - mean) / std.
struct Normalization {
  std::vector<double> mean{0.0};
  std::vector<double> stddev{1.0};
};

// Raw IDX array: big-endian header, unsigned-byte payload only.
struct IdxArray {
  std::vector<int> dims;
  std::vector<std::uint8_t> data;
};

// Reads an IDX file, gzip-compressed or plain. Throws FormatError on a bad
// magic number, an unsupported element type or truncation, and
// std::runtime_error when the file cannot be opened.
IdxArray read_idx(const std::string& path);
void write_idx(const std::string& path, const IdxArray& a, bool gzip);

// MNIST-style image/label IDX pair (images N x rows x cols, labels N).
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       const Normalization& norm = {}, const std::string& split = "");

// CIFAR-10 binary batches: 3073-byte records (label, 1024 R, 1024 G, 1024 B).
// Multiple files are concatenated in the given order.
Dataset load_cifar10_bin(const std::vector<std::string>& paths, const Normalization& norm = {},
                         const std::string& split = "");

// Gaussian blobs in d dimensions, shaped (n, d, 1, 1). Class k has mean
// mu_k ~ N(0, 4^2 I) and unit noise; labels are exactly balanced (n % classes
// == 0 is required) and shuffled. Deterministic in seed.
Dataset synth_classification(int n, int d, int classes, std::uint64_t seed);

struct AugmentOptions {
  bool enabled = false;
  int pad = 4;
  bool flip = true;
};

// Random crop from a zero-padded image and horizontal flip, in place on image
// `index` of `images`. Draws crop offsets then the flip bit from `rng`.
void augment(Tensor& images, int index, const AugmentOptions& opt, std::mt19937_64& rng);

void flip_horizontal(Tensor& images, int index);
// Shifts image `index` by (dy, dx) with zero fill; |dy|, |dx| <= pad.
void shift_image(Tensor& images, int index, int dy, int dx);

// Copies the selected samples into a batch.
struct Batch {
  Tensor images;
  std::vector<int> labels;
};
Batch make_batch(const Dataset& ds, std::span<const int> indices);

// Root directory for datasets: $LCQ_DATA_ROOT or `fallback`.
std::string data_root(const std::string& fallback);

}  // namespace lcq::data

#endif  // LCQ_DATA_HPP_

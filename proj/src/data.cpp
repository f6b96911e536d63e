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

#include "lcq/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace lcq::data {
namespace {

struct GzCloser {
  void operator()(gzFile f) const {
    if (f) gzclose(f);
  }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

GzHandle open_gz(const std::string& path, const char* mode) {
  GzHandle f(gzopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path);
  return f;
}

// gzread transparently reads uncompressed files too.
std::vector<std::uint8_t> read_all(const std::string& path) {
  GzHandle f = open_gz(path, "rb");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f.get(), buf, sizeof(buf));
    if (n < 0) throw FormatError(path + ": read error (corrupt gzip stream?)");
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  return out;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void normalize_into(float* dst, const std::uint8_t* src, std::size_t n, double mean, double sd) {
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] = static_cast<float>((src[i] / 255.0 - mean) / sd);
  }
}

double channel_value(const std::vector<double>& v, int c, const char* what) {
  if (v.size() == 1) return v[0];
  LCQ_CHECK(c < static_cast<int>(v.size()), ContractViolation,
            std::string("normalization ") + what + " has too few channels");
  return v[c];
}

}  // namespace

IdxArray read_idx(const std::string& path) {
  const std::vector<std::uint8_t> raw = read_all(path);
  LCQ_CHECK(raw.size() >= 4, FormatError, path + ": truncated IDX header");
  LCQ_CHECK(raw[0] == 0 && raw[1] == 0, FormatError, path + ": bad IDX magic");
  LCQ_CHECK(raw[2] == 0x08, FormatError, path + ": only unsigned-byte IDX arrays are supported");
  const int rank = raw[3];
  LCQ_CHECK(rank >= 1 && rank <= 4, FormatError, path + ": bad IDX rank");
  const std::size_t header = 4 + 4 * static_cast<std::size_t>(rank);
  LCQ_CHECK(raw.size() >= header, FormatError, path + ": truncated IDX header");
  IdxArray a;
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t d = be32(&raw[4 + 4 * i]);
    LCQ_CHECK(d > 0 && d < (1u << 28), FormatError, path + ": bad IDX dimension");
    a.dims.push_back(static_cast<int>(d));
    count *= d;
  }
  LCQ_CHECK(raw.size() - header == count, FormatError,
            path + ": IDX payload has " + std::to_string(raw.size() - header) + " bytes, expected " +
                std::to_string(count));
  a.data.assign(raw.begin() + static_cast<std::ptrdiff_t>(header), raw.end());
  return a;
}

void write_idx(const std::string& path, const IdxArray& a, bool gzip) {
  std::vector<std::uint8_t> out = {0, 0, 0x08, static_cast<std::uint8_t>(a.dims.size())};
  for (int d : a.dims) {
    const auto u = static_cast<std::uint32_t>(d);
    out.insert(out.end(), {static_cast<std::uint8_t>(u >> 24), static_cast<std::uint8_t>(u >> 16),
                           static_cast<std::uint8_t>(u >> 8), static_cast<std::uint8_t>(u)});
  }
  out.insert(out.end(), a.data.begin(), a.data.end());
  if (gzip) {
    GzHandle f = open_gz(path, "wb9");
    LCQ_CHECK(gzwrite(f.get(), out.data(), static_cast<unsigned>(out.size())) ==
                  static_cast<int>(out.size()),
              FormatError, path + ": gzip write failed");
  } else {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  }
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       const Normalization& norm, const std::string& split) {
  const IdxArray img = read_idx(images_path);
  const IdxArray lab = read_idx(labels_path);
  LCQ_CHECK(img.dims.size() == 3, FormatError, images_path + ": expected N x rows x cols");
  LCQ_CHECK(lab.dims.size() == 1 && lab.dims[0] == img.dims[0], FormatError,
            labels_path + ": label count does not match images");
  Dataset ds;
  ds.split = split;
  ds.classes = 10;
  const int n = img.dims[0], h = img.dims[1], w = img.dims[2];
  ds.images = Tensor({n, 1, h, w});
  normalize_into(ds.images.data(), img.data.data(), img.data.size(),
                 channel_value(norm.mean, 0, "mean"), channel_value(norm.stddev, 0, "std"));
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    LCQ_CHECK(lab.data[i] < 10, FormatError, labels_path + ": label out of range");
    ds.labels[i] = lab.data[i];
  }
  return ds;
}

Dataset load_cifar10_bin(const std::vector<std::string>& paths, const Normalization& norm,
                         const std::string& split) {
  constexpr std::size_t kRecord = 3073;
  std::vector<std::uint8_t> all;
  for (const auto& p : paths) {
    std::vector<std::uint8_t> raw = read_all(p);
    LCQ_CHECK(!raw.empty() && raw.size() % kRecord == 0, FormatError,
              p + ": size " + std::to_string(raw.size()) + " is not a multiple of 3073");
    all.insert(all.end(), raw.begin(), raw.end());
  }
  const int n = static_cast<int>(all.size() / kRecord);
  Dataset ds;
  ds.split = split;
  ds.classes = 10;
  ds.images = Tensor({n, 3, 32, 32});
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const std::uint8_t* rec = all.data() + static_cast<std::size_t>(i) * kRecord;
    LCQ_CHECK(rec[0] < 10, FormatError, "CIFAR-10 record " + std::to_string(i) + ": bad label");
    ds.labels[i] = rec[0];
    for (int c = 0; c < 3; ++c) {
      normalize_into(&ds.images.at4(i, c, 0, 0), rec + 1 + 1024 * c, 1024,
                     channel_value(norm.mean, c, "mean"), channel_value(norm.stddev, c, "std"));
    }
  }
  return ds;
}

Dataset synth_classification(int n, int d, int classes, std::uint64_t seed) {
  LCQ_CHECK(n > 0 && d > 0 && classes > 1, ContractViolation, "synth_classification: bad sizes");
  LCQ_CHECK(n % classes == 0, ContractViolation,
            "synth_classification: n must be a multiple of classes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> centers(static_cast<std::size_t>(classes) * d);
  for (double& c : centers) c = 4.0 * unit(rng);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % classes;
  std::shuffle(labels.begin(), labels.end(), rng);
  Dataset ds;
  ds.split = "synthetic";
  ds.classes = classes;
  ds.images = Tensor({n, d, 1, 1});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      ds.images[static_cast<std::size_t>(i) * d + j] =
          static_cast<float>(centers[static_cast<std::size_t>(labels[i]) * d + j] + unit(rng));
    }
  }
  ds.labels = std::move(labels);
  return ds;
}

void flip_horizontal(Tensor& images, int index) {
  const int C = images.dim(1), H = images.dim(2), W = images.dim(3);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y) {
      float* row = &images.at4(index, c, y, 0);
      std::reverse(row, row + W);
    }
}

void shift_image(Tensor& images, int index, int dy, int dx) {
  const int C = images.dim(1), H = images.dim(2), W = images.dim(3);
  std::vector<float> tmp(static_cast<std::size_t>(H) * W);
  for (int c = 0; c < C; ++c) {
    float* plane = &images.at4(index, c, 0, 0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int sy = y + dy, sx = x + dx;
        tmp[static_cast<std::size_t>(y) * W + x] =
            (sy >= 0 && sy < H && sx >= 0 && sx < W) ? plane[sy * W + sx] : 0.0f;
      }
    std::copy(tmp.begin(), tmp.end(), plane);
  }
}

void augment(Tensor& images, int index, const AugmentOptions& opt, std::mt19937_64& rng) {
  if (!opt.enabled) return;
  // A crop at offset (oy, ox) of the image padded by `pad` equals a shift by
  // (oy - pad, ox - pad).
  std::uniform_int_distribution<int> off(0, 2 * opt.pad);
  const int oy = off(rng), ox = off(rng);
  shift_image(images, index, oy - opt.pad, ox - opt.pad);
  if (opt.flip && std::uniform_int_distribution<int>(0, 1)(rng) == 1) flip_horizontal(images, index);
}

Batch make_batch(const Dataset& ds, std::span<const int> indices) {
  Batch b;
  Shape s = ds.images.shape();
  const std::size_t per = ds.images.numel() / s[0];
  s[0] = static_cast<int>(indices.size());
  b.images = Tensor(s);
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int k = indices[i];
    LCQ_CHECK(k >= 0 && k < ds.size(), ContractViolation, "make_batch: index out of range");
    std::copy_n(ds.images.data() + static_cast<std::size_t>(k) * per, per, b.images.data() + i * per);
    b.labels.push_back(ds.labels[k]);
  }
  return b;
}

std::string data_root(const std::string& fallback) {
  const char* env = std::getenv("LCQ_DATA_ROOT");
  return env && *env ? std::string(env) : fallback;
}

}  // namespace lcq::data

#!/usr/bin/env python3
# Copyright 2026 The LCQ Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Builds the bundled MNIST subset (IDX, gzip) from the `mnist` npm package.

The package ships 10,000 MNIST digits as JSON (one file per class, 784
values in [0, 1] rounded to 3 decimals). Pixels are mapped back to bytes with
round(v * 255); the digits are shuffled with a fixed seed and split 8000/2000.

Usage: make_mnist_subset.py <package>/src/digits <out_dir>
"""

import gzip
import json
import os
import random
import struct
import sys

SEED = 20260101
TRAIN = 8000


def write_idx(path, dims, payload):
  header = struct.pack(">BBBB", 0, 0, 0x08, len(dims))
  header += b"".join(struct.pack(">I", d) for d in dims)
  # mtime=0 keeps the output byte-identical across runs.
  with open(path, "wb") as raw:
    with gzip.GzipFile(fileobj=raw, mode="wb", compresslevel=9, mtime=0) as f:
      f.write(header + bytes(payload))


def main(argv):
  if len(argv) != 3:
    sys.exit(__doc__)
  src, out = argv[1], argv[2]
  samples = []
  for label in range(10):
    with open(os.path.join(src, f"{label}.json")) as f:
      flat = json.load(f)["data"]
    assert len(flat) % 784 == 0
    for i in range(0, len(flat), 784):
      pix = [min(255, max(0, round(v * 255))) for v in flat[i:i + 784]]
      samples.append((pix, label))
  random.Random(SEED).shuffle(samples)
  os.makedirs(out, exist_ok=True)
  for name, part in (("train", samples[:TRAIN]), ("t10k", samples[TRAIN:])):
    images = [p for pix, _ in part for p in pix]
    labels = [l for _, l in part]
    write_idx(os.path.join(out, f"{name}-images-idx3-ubyte.gz"), [len(part), 28, 28], images)
    write_idx(os.path.join(out, f"{name}-labels-idx1-ubyte.gz"), [len(part)], labels)
    print(f"{name}: {len(part)} images")


if __name__ == "__main__":
  main(sys.argv)

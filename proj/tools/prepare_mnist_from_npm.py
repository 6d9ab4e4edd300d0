#!/usr/bin/env python3
# Copyright 2026 The GSBA Authors. All Rights Reserved.
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
"""Builds MNIST IDX files from the 10k-digit subset bundled in the npm `mnist` package.

Used where the canonical MNIST mirrors are unreachable. Every fifth digit of
each class goes to the test split; both splits are shuffled with a fixed seed.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/prepare_mnist_from_npm.py package/src/digits data/mnist
"""
import argparse
import json
import pathlib
import random
import struct


def write_idx(path, images, labels):
    with open(path / "images.tmp", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(path / "labels.tmp", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    train, test = [], []
    for digit in range(10):
        data = json.load(open(pathlib.Path(args.digits_dir) / f"{digit}.json"))["data"]
        count = len(data) // 784
        for i in range(count):
            pixels = [min(255, max(0, round(v * 255))) for v in data[i * 784:(i + 1) * 784]]
            (test if i % 5 == 4 else train).append((pixels, digit))

    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(test)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("t10k", test)):
        write_idx(out, [p for p, _ in split], [l for _, l in split])
        (out / "images.tmp").rename(out / f"{name}-images-idx3-ubyte")
        (out / "labels.tmp").rename(out / f"{name}-labels-idx1-ubyte")
        print(f"{name}: {len(split)} images")


if __name__ == "__main__":
    main()

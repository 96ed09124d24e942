#!/usr/bin/env python3
# Copyright (c) 2026 The autorecon Authors
# SPDX-License-Identifier: Apache-2.0
"""Convert the digit JSON shipped in the `mnist` npm package into IDX archives.

The package holds 10000 28x28 MNIST digits grouped by class with pixel values
in [0, 1]. Every fifth sample of each class goes to the held-out split.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/import_npm_mnist.py package/src/digits data/mnist_like
"""
import gzip
import json
import struct
import sys
from pathlib import Path


def write_idx(path, magic_dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        magic, dims = magic_dims
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    splits = {"train": ([], []), "t10k": ([], [])}
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        count = len(raw) // 784
        for i in range(count):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in raw[i * 784:(i + 1) * 784])
            split = "t10k" if i % 5 == 4 else "train"
            splits[split][0].append(pixels)
            splits[split][1].append(digit)
    for name, (images, labels) in splits.items():
        # interleave classes deterministically so batches are mixed
        order = sorted(range(len(labels)), key=lambda k: ((k * 7919) % len(labels)))
        images = [images[k] for k in order]
        labels = [labels[k] for k in order]
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", (0x803, (len(images), 28, 28)), b"".join(images))
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", (0x801, (len(labels),)), bytes(labels))
        print(f"{name}: {len(labels)} samples")


if __name__ == "__main__":
    main(*sys.argv[1:3])

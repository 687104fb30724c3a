#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package (10,000 MNIST samples)
into IDX files: an 8,000-example train split and a 2,000-example test split.

usage: mnist_from_npm.py <path-to-unpacked-npm-package> <out-dir>

Fetch the package with `npm pack mnist && tar xzf mnist-*.tgz`.
"""
import json
import random
import struct
import sys
from pathlib import Path

SIDE = 28


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    samples = []
    for digit in range(10):
        raw = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        n = len(raw) // (SIDE * SIDE)
        for k in range(n):
            px = raw[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            samples.append(([min(255, max(0, round(v * 255))) for v in px], digit))
    random.Random(20240101).shuffle(samples)
    train, test = samples[:8000], samples[8000:]
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main()

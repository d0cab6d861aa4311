#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the npm `mnist` package into IDX files.

Usage: npm_mnist_to_idx.py <package/src/digits> <out dir> [train per class]

The package stores 10000 MNIST digits as pixel/255 rounded to three decimals,
which is enough precision to recover the original bytes exactly. The first
`train per class` digits of each class go to the training files and the rest
to the test files; both are written in a fixed shuffled order.
"""
import json
import random
import struct
import sys
from pathlib import Path


def write_idx(out: Path, stem: str, samples):
    images = out / f"{stem}-images-idx3-ubyte"
    labels = out / f"{stem}-labels-idx1-ubyte"
    with open(images, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(bytes(pixels))
    with open(labels, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    digits = Path(sys.argv[1])
    out = Path(sys.argv[2])
    per_class = int(sys.argv[3]) if len(sys.argv) > 3 else 500
    out.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for label in range(10):
        raw = json.load(open(digits / f"{label}.json"))["data"]
        assert len(raw) % 784 == 0
        for k in range(len(raw) // 784):
            values = raw[k * 784:(k + 1) * 784]
            pixels = [int(round(v * 255)) for v in values]
            assert all(abs(p / 255 - v) < 6e-4 for p, v in zip(pixels, values))
            (train if k < per_class else test).append((pixels, label))
    rng = random.Random(0)
    rng.shuffle(train)
    rng.shuffle(test)
    write_idx(out, "train", train)
    write_idx(out, "t10k", test)
    print(f"train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main()

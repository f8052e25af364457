#!/usr/bin/env python3
"""Fetch MNIST digits and write them as IDX files for training and attacks.

Sources the `mnist` npm package (10,000 genuine MNIST images stored as
per-digit JSON with pixel/255 values), reconstructs the original uint8
pixels, applies one deterministic shuffle, and writes a 9000/1000
train/val split in standard big-endian IDX format:

    <dir>/train-images-idx3-ubyte   <dir>/train-labels-idx1-ubyte
    <dir>/val-images-idx3-ubyte     <dir>/val-labels-idx1-ubyte

The target directory comes from argv[1], else $SUBPGD_DATA_DIR, else
./data/mnist. Re-running with the files already present is a no-op. If npm
is unavailable, drop IDX files with those names into the directory yourself.
"""

import json
import os
import struct
import subprocess
import sys
import tempfile

import numpy as np

FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
         "val-images-idx3-ubyte", "val-labels-idx1-ubyte")
VAL_COUNT = 1000
SHUFFLE_SEED = 0


def write_images(path, arr):
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, arr.shape[0], 28, 28))
        f.write(arr.astype(np.uint8).tobytes())


def write_labels(path, arr):
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, arr.shape[0]))
        f.write(arr.astype(np.uint8).tobytes())


def fetch(target):
    os.makedirs(target, exist_ok=True)
    if all(os.path.exists(os.path.join(target, f)) for f in FILES):
        print(f"dataset already present in {target}", file=sys.stderr)
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        print("installing mnist package via npm ...", file=sys.stderr)
        try:
            subprocess.run(["npm", "install", "--no-audit", "--no-fund", "mnist"],
                           cwd=tmp, check=True, capture_output=True, text=True)
        except (FileNotFoundError, subprocess.CalledProcessError) as e:
            detail = getattr(e, "stderr", "") or str(e)
            print(f"npm fetch failed: {detail.strip()}", file=sys.stderr)
            print(f"place IDX files named {', '.join(FILES)} in {target} "
                  "manually instead", file=sys.stderr)
            return 1
        digits_dir = os.path.join(tmp, "node_modules", "mnist", "src", "digits")
        images, labels = [], []
        for digit in range(10):
            with open(os.path.join(digits_dir, f"{digit}.json")) as f:
                flat = np.array(json.load(f)["data"], dtype=float)
            imgs = flat.reshape(-1, 784)
            # stored values are pixel/255; recover the original bytes
            pixels = np.rint(imgs * 255.0)
            if pixels.min() < 0 or pixels.max() > 255:
                raise ValueError(f"digit {digit}: values outside byte range")
            images.append(pixels.astype(np.uint8))
            labels.append(np.full(imgs.shape[0], digit, dtype=np.uint8))
    images = np.vstack(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(SHUFFLE_SEED).permutation(images.shape[0])
    images, labels = images[order], labels[order]
    n_val = VAL_COUNT
    write_images(os.path.join(target, "train-images-idx3-ubyte"), images[n_val:])
    write_labels(os.path.join(target, "train-labels-idx1-ubyte"), labels[n_val:])
    write_images(os.path.join(target, "val-images-idx3-ubyte"), images[:n_val])
    write_labels(os.path.join(target, "val-labels-idx1-ubyte"), labels[:n_val])
    counts = np.bincount(labels, minlength=10)
    print(f"wrote {images.shape[0] - n_val} train / {n_val} val images to "
          f"{target} (per-digit counts: {counts.tolist()})", file=sys.stderr)
    return 0


def main():
    target = sys.argv[1] if len(sys.argv) > 1 else \
        os.environ.get("SUBPGD_DATA_DIR", os.path.join("data", "mnist"))
    return fetch(target)


if __name__ == "__main__":
    raise SystemExit(main())

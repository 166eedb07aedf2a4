"""Convert the digits bundled with the `mnist` npm package (v1.1.0, 10,000
MNIST samples stored as JSON floats) into gzipped IDX files.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_subset.py package/src/digits data/mnist-subset

The 10,000 samples are shuffled with a fixed seed and split 8,000 / 2,000
into train and t10k files.
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main(src, dst):
    images, labels = [], []
    for digit in range(10):
        data = json.load(open(Path(src) / f"{digit}.json"))["data"]
        arr = np.asarray(data, dtype=np.float64).reshape(-1, 784)
        images.append(arr)
        labels.append(np.full(len(arr), digit, dtype=np.uint8))
    x = np.rint(np.concatenate(images) * 255.0).clip(0, 255).astype(np.uint8)
    y = np.concatenate(labels)
    order = np.random.RandomState(20201).permutation(len(y))
    x, y = x[order], y[order]
    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    for name, sl in (("train", slice(0, 8000)), ("t10k", slice(8000, None))):
        xs, ys = x[sl], y[sl]
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 0x803, (len(xs), 28, 28), xs.tobytes())
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(ys),), ys.tobytes())
        print(name, len(ys), np.bincount(ys, minlength=10).tolist())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

"""Build the mnist-subset IDX files from the digits bundled in the npm `mnist` package.

Usage: npm pack mnist && tar xzf mnist-*.tgz && python3 make_mnist_subset.py package/src/digits data/mnist-subset

The package stores 10000 MNIST digits as [0,1] grayscale values grouped by class.
Images are interleaved across classes, shuffled with a fixed seed, quantized back to
bytes and split into 4096 training and 512 evaluation images.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

SIZE = 28
N_TRAIN = 4096
N_EVAL = 512


def write_idx(path, images, labels):
    with gzip.GzipFile(path / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIZE, SIZE))
        for img in images:
            f.write(bytes(img))
    with gzip.GzipFile(path / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    src, dst = Path(src), Path(dst)
    pool = []
    for label in range(10):
        raw = json.loads((src / f"{label}.json").read_text())["data"]
        n = len(raw) // (SIZE * SIZE)
        for k in range(n):
            px = raw[k * SIZE * SIZE:(k + 1) * SIZE * SIZE]
            pool.append(([min(255, max(0, round(v * 255))) for v in px], label))
    random.Random(20170101).shuffle(pool)
    train, held = pool[:N_TRAIN], pool[N_TRAIN:N_TRAIN + N_EVAL]
    for name, part in (("train", train), ("eval", held)):
        out = dst / name
        out.mkdir(parents=True, exist_ok=True)
        write_idx(out, [p for p, _ in part], [l for _, l in part])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

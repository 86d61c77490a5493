"""Write a small MNIST subset as gzipped IDX files.

The source is a CSV (optionally gzipped) with 784 pixel values in 0..255
followed by the label on each row, such as the 5000-image sample bundled with
the mlxtend package (mlxtend/data/data/mnist_5k.csv.gz). The source may be
sorted by label, so the split is stratified: per class, the first
train/10 rows go to the training split and the next test/10 rows to the test
split. Both splits are then shuffled with a fixed seed.
"""

import argparse
import gzip
import pathlib
import struct

import numpy as np


def write_idx(path, array, magic):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for dim in array.shape:
            f.write(struct.pack(">I", dim))
        f.write(array.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("source", type=pathlib.Path)
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("data/mnist-1k"))
    parser.add_argument("--train", type=int, default=1000)
    parser.add_argument("--test", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rows = np.loadtxt(args.source, delimiter=",", dtype=np.int64)
    if rows.shape[1] != 785:
        raise SystemExit(f"expected 785 columns, got {rows.shape[1]}")
    if args.train % 10 or args.test % 10:
        raise SystemExit("--train and --test must be multiples of 10")
    images = rows[:, :784].reshape(-1, 28, 28)
    labels = rows[:, 784]

    per_train, per_test = args.train // 10, args.test // 10
    train_idx, test_idx = [], []
    for c in range(10):
        members = np.flatnonzero(labels == c)
        if members.size < per_train + per_test:
            raise SystemExit(f"class {c} has only {members.size} rows")
        train_idx.extend(members[:per_train])
        test_idx.extend(members[per_train:per_train + per_test])
    rng = np.random.default_rng(args.seed)
    splits = {"train": rng.permutation(train_idx), "t10k": rng.permutation(test_idx)}

    args.out.mkdir(parents=True, exist_ok=True)
    for name, idx in splits.items():
        write_idx(args.out / f"{name}-images-idx3-ubyte.gz", images[idx], 0x803)
        write_idx(args.out / f"{name}-labels-idx1-ubyte.gz", labels[idx], 0x801)
        counts = np.bincount(labels[idx], minlength=10)
        print(f"{name}: {idx.size} images, class counts {counts.tolist()}")


if __name__ == "__main__":
    main()

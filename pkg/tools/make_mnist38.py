"""Build the bundled 3-vs-8 dataset (14x14 average-pooled) from mlxtend's MNIST subset.

usage: python3 tools/make_mnist38.py path/to/mlxtend-*.whl [out.csv.gz]

Rows: label (+1 for a 3, -1 for an 8) followed by 196 pooled pixels (0..255).
The 1000 originals are followed by 1000 copies shifted by one pixel (8-neighbourhood).
"""
import gzip
import io
import sys
import zipfile

import numpy as np


def pool(img28):
    return img28.reshape(14, 2, 14, 2).mean(axis=(1, 3))


def shift(img28, dy, dx):
    out = np.zeros_like(img28)
    ys, yd = (slice(0, 28 - dy), slice(dy, 28)) if dy >= 0 else (slice(-dy, 28), slice(0, 28 + dy))
    xs, xd = (slice(0, 28 - dx), slice(dx, 28)) if dx >= 0 else (slice(-dx, 28), slice(0, 28 + dx))
    out[yd, xd] = img28[ys, xs]
    return out


def main(whl, out="src/fabhe/data/mnist38_14x14.csv.gz"):
    raw = gzip.decompress(zipfile.ZipFile(whl).read("mlxtend/data/data/mnist_5k.csv.gz"))
    a = np.loadtxt(io.BytesIO(raw), delimiter=",")
    X, y = a[:, :-1], a[:, -1].astype(int)
    keep = (y == 3) | (y == 8)
    X, y = X[keep].reshape(-1, 28, 28), np.where(y[keep] == 3, 1, -1)
    rng = np.random.default_rng(38)
    offs = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    rows = [np.concatenate([[lab], np.rint(pool(img)).ravel()]) for img, lab in zip(X, y)]
    for img, lab in zip(X, y):
        dy, dx = offs[rng.integers(len(offs))]
        rows.append(np.concatenate([[lab], np.rint(pool(shift(img, dy, dx))).ravel()]))
    buf = io.StringIO()
    np.savetxt(buf, np.array(rows, dtype=int), fmt="%d", delimiter=",")
    with gzip.open(out, "wt") as f:
        f.write(buf.getvalue())
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])

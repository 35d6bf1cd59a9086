"""Write the 5,000-image MNIST subset bundled with mlxtend as gzip IDX files.

Usage:
    python scripts/make_mnist_idx.py [--wheel mlxtend-*.whl] [--out data/mnist5k]

Without ``--wheel`` the installed ``mlxtend`` package is used. A wheel can be
fetched with ``pip download mlxtend --no-deps -d /tmp/mlx``.
"""

import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from l2d.data import write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv_gz(args) -> np.ndarray:
    if args.wheel:
        with zipfile.ZipFile(args.wheel) as zf:
            raw = zf.read(MEMBER)
    else:
        import mlxtend

        raw = (Path(mlxtend.__file__).parent / "data" / "data" / "mnist_5k.csv.gz").read_bytes()
    return np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--wheel", help="path to an mlxtend wheel")
    parser.add_argument("--out", default="data/mnist5k")
    args = parser.parse_args()
    table = read_csv_gz(args)
    images = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "images-idx3-ubyte.gz", images)
    write_idx(out / "labels-idx1-ubyte.gz", labels)
    print(f"wrote {len(labels)} images to {out}")


if __name__ == "__main__":
    main()

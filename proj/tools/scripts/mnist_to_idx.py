#!/usr/bin/env python3
"""Convert the 5,000-sample MNIST subset shipped with mlxtend to IDX files.

The subset lives in mlxtend's wheel as mlxtend/data/data/mnist_5k.csv.gz, one
row per image: 784 pixel values followed by the label.

    pip download mlxtend==0.24.0 --no-deps -d /tmp/mlx
    python3 tools/scripts/mnist_to_idx.py /tmp/mlx/mlxtend-0.24.0-py3-none-any.whl data/
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(source):
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as wheel:
            raw = wheel.read(MEMBER)
    else:
        raw = source.read_bytes()
    text = gzip.decompress(raw).decode("ascii")
    rows = []
    for line in io.StringIO(text):
        line = line.strip()
        if line:
            rows.append([int(float(v)) for v in line.split(",")])
    return rows


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    rows = read_rows(Path(sys.argv[1]))
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    n = len(rows)
    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        if len(row) != 785 or not 0 <= row[-1] <= 9:
            sys.exit("unexpected row layout")
        pixels.extend(row[:-1])
        labels.append(row[-1])
    (out / "mnist5k-images.idx").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + pixels)
    (out / "mnist5k-labels.idx").write_bytes(struct.pack(">II", 0x801, n) + labels)
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()

"""Rebuild data/mnist-5k from the 5000-digit MNIST sample bundled with mlxtend.

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 scripts/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist-5k
"""
import gzip
import io
import struct
import sys
import zipfile

import numpy as np


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">BBBBIII", 0, 0, 8, 3, len(images), 28, 28))
        f.write(images.tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">BBBBI", 0, 0, 8, 1, len(labels)))
        f.write(labels.tobytes())


def main(wheel, out_dir):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")
    images = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    # the source is sorted by class; a fixed permutation makes "first n" class-balanced
    perm = np.random.RandomState(0).permutation(len(images))
    images, labels = images[perm], labels[perm]
    write_images(f"{out_dir}/train-images-idx3-ubyte", images[:4000])
    write_labels(f"{out_dir}/train-labels-idx1-ubyte", labels[:4000])
    write_images(f"{out_dir}/t10k-images-idx3-ubyte", images[4000:])
    write_labels(f"{out_dir}/t10k-labels-idx1-ubyte", labels[4000:])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

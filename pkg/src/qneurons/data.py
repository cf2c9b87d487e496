"""IDX ingestion, normalization, deterministic shuffling, and batching.

The IDX container is big-endian: a 32-bit magic whose low byte is the
dimension count, one 32-bit size per dimension, then the raw byte
payload.  Image files use magic 2051, label files 2049.  Files ending in
``.gz`` are decompressed transparently.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np

from .errors import BadMagic, CountMismatch, InvalidConfig, TruncatedFile
from .sampling import RngState

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


@dataclass
class Dataset:
    images: np.ndarray  # (count, 28, 28), float32 in [0, 1]
    labels: np.ndarray  # (count,), int64 in [0, 9]
    split: str = "train"

    def __len__(self):
        return self.images.shape[0]


def _open(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, n: int, path) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedFile(f"{path}: expected {n} more bytes, got {len(data)}")
    return data


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Read one IDX file of unsigned bytes into an array."""
    with _open(path) as f:
        magic = struct.unpack(">i", _read_exact(f, 4, path))[0]
        if magic != expected_magic:
            raise BadMagic(f"{path}: magic {magic}, expected {expected_magic}")
        ndim = magic & 0xFF
        dims = [struct.unpack(">i", _read_exact(f, 4, path))[0] for _ in range(ndim)]
        payload = _read_exact(f, int(np.prod(dims)), path)
        extra = f.read(1)
        if extra:
            raise TruncatedFile(f"{path}: trailing bytes beyond declared payload")
        return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def write_idx(path, array: np.ndarray, magic: int) -> None:
    """Write an unsigned-byte array as an IDX file (fixtures and converters)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if (magic & 0xFF) != array.ndim:
        raise InvalidConfig(f"magic {magic} encodes ndim {magic & 0xFF}, array has {array.ndim}")
    with open(path, "wb") as f:
        f.write(struct.pack(">i", magic))
        for d in array.shape:
            f.write(struct.pack(">i", d))
        f.write(array.tobytes())


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Load an image/label IDX pair; pixels are scaled to [0, 1] by /255."""
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(
            f"{images_path} has {images.shape[0]} images but "
            f"{labels_path} has {labels.shape[0]} labels"
        )
    return Dataset(
        images=images.astype(np.float32) / np.float32(255.0),
        labels=labels.astype(np.int64),
        split=split,
    )


def subset(ds: Dataset, n: int, rng: RngState) -> Dataset:
    """Seeded shuffle, then truncate to at most n samples."""
    if n < 1:
        raise InvalidConfig(f"subset size must be >= 1, got {n}")
    perm = rng.permutation(len(ds))[: min(n, len(ds))]
    return Dataset(ds.images[perm], ds.labels[perm], ds.split)


def iterate_minibatches(
    x: np.ndarray, y: np.ndarray, batch_size: int, rng: RngState
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """One epoch of seeded-shuffle minibatches; the final partial batch is
    included, and the union of batches is a permutation of the data."""
    if batch_size < 1:
        raise InvalidConfig(f"batch_size must be >= 1, got {batch_size}")
    perm = rng.permutation(x.shape[0])
    for start in range(0, x.shape[0], batch_size):
        idx = perm[start : start + batch_size]
        yield x[idx], y[idx]


def batches(ds: Dataset, batch_size: int, rng: RngState):
    return iterate_minibatches(ds.images, ds.labels, batch_size, rng)

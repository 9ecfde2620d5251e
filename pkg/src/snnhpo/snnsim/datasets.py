"""Labeled image datasets: a seeded synthetic generator and an IDX reader."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from ..exceptions import ValidationError

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (n, n_pixels) intensities in [0, 1]
    labels: np.ndarray  # (n,) ints in [0, n_classes)
    n_classes: int

    def __post_init__(self):
        if self.images.ndim != 2 or self.labels.shape != (self.images.shape[0],):
            raise ValidationError("dataset images must be (n, pixels) with one label per image")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.images.shape[1]

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.n_classes)


@dataclass(frozen=True)
class Splits:
    train: Dataset
    valid: Dataset
    test: Dataset


def _blob_prototypes(n_classes: int, size: int) -> np.ndarray:
    """Disjoint-support bright blobs, one per class, placed on a circle."""
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    c = (size - 1) / 2.0
    ring = 0.28 * size if n_classes > 1 else 0.0
    centers = [
        (c + ring * np.sin(2 * np.pi * k / n_classes), c + ring * np.cos(2 * np.pi * k / n_classes))
        for k in range(n_classes)
    ]
    dist = np.stack([np.hypot(yy - cy, xx - cx) for cy, cx in centers])
    radius = max(1.0, 0.2 * size)
    owner = dist.argmin(0)
    protos = np.zeros((n_classes, size, size))
    for k in range(n_classes):
        inside = (owner == k) & (dist[k] <= radius)
        protos[k][inside] = 1.0 - 0.5 * dist[k][inside] / radius
    return protos.reshape(n_classes, -1)


def synthetic_blobs(n_classes: int = 3, size: int = 8, n_train: int = 300, n_valid: int = 100,
                    n_test: int = 100, seed: int = 0, noise: float = 0.05) -> Splits:
    """k-class images whose classes light up disjoint pixel blobs.

    Each sample scales its class prototype pixel-wise by ``U(0.6, 1)`` and adds
    sparse background pixels (probability ``noise``, intensity ``U(0, 0.5)``).
    Labels are balanced round-robin and then shuffled.
    """
    if n_classes < 2 or size < 2:
        raise ValidationError("synthetic data needs >= 2 classes and size >= 2")
    rng = np.random.default_rng(seed)
    protos = _blob_prototypes(n_classes, size)

    def make(n: int) -> Dataset:
        labels = rng.permutation(np.arange(n) % n_classes)
        gain = rng.uniform(0.6, 1.0, (n, protos.shape[1]))
        background = (rng.random((n, protos.shape[1])) < noise) * rng.uniform(0, 0.5, (n, protos.shape[1]))
        images = np.clip(np.maximum(protos[labels] * gain, background), 0.0, 1.0)
        return Dataset(images, labels.astype(np.int64), n_classes)

    return Splits(make(n_train), make(n_valid), make(n_test))


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx_images(path) -> np.ndarray:
    """IDX3 unsigned-byte images as ``(n, rows*cols)`` floats in [0, 1]."""
    with _open(path) as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise ValidationError(f"{path}: truncated IDX image header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise ValidationError(f"{path}: bad IDX image magic {magic}, expected {IDX_IMAGES_MAGIC}")
        data = np.frombuffer(fh.read(n * rows * cols), dtype=np.uint8)
    if data.size != n * rows * cols:
        raise ValidationError(f"{path}: expected {n * rows * cols} pixels, found {data.size}")
    return data.reshape(n, rows * cols).astype(float) / 255.0


def read_idx_labels(path) -> np.ndarray:
    with _open(path) as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise ValidationError(f"{path}: truncated IDX label header")
        magic, n = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise ValidationError(f"{path}: bad IDX label magic {magic}, expected {IDX_LABELS_MAGIC}")
        data = np.frombuffer(fh.read(n), dtype=np.uint8)
    if data.size != n:
        raise ValidationError(f"{path}: expected {n} labels, found {data.size}")
    return data.astype(np.int64)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray, shape: Tuple[int, int]) -> None:
    """Write images (floats in [0, 1]) and labels in IDX layout."""
    rows, cols = shape
    pix = np.clip(np.round(np.asarray(images) * 255), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, pix.shape[0], rows, cols))
        fh.write(pix.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def load_idx(images_path, labels_path, n_train: int, n_valid: int, n_test: int,
             n_classes: Optional[int] = None) -> Splits:
    """Split the first ``n_train + n_valid + n_test`` IDX samples in file order."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValidationError("IDX image and label counts differ")
    need = n_train + n_valid + n_test
    if need > images.shape[0]:
        raise ValidationError(f"IDX files hold {images.shape[0]} samples, {need} requested")
    k = int(labels.max()) + 1 if n_classes is None else n_classes
    a, b = n_train, n_train + n_valid
    return Splits(
        Dataset(images[:a], labels[:a], k),
        Dataset(images[a:b], labels[a:b], k),
        Dataset(images[b:need], labels[b:need], k),
    )

"""CIFAR-10 binary records: 1 label byte followed by 3072 pixel bytes (CHW)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

RECORD = 3073
IMAGE_SHAPE = (3, 32, 32)


class CifarFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    labels: np.ndarray  # (N,) u8
    images: np.ndarray  # (N, 3, 32, 32) u8

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return int(self.labels[i]), self.images[i]

    def head(self, n: int) -> Dataset:
        return Dataset(self.labels[:n], self.images[:n])


def parse_cifar10(raw: bytes, source: str = "<bytes>") -> Dataset:
    if len(raw) % RECORD:
        raise CifarFormatError(f"{source}: {len(raw)} bytes is not a whole number of {RECORD}-byte records")
    recs = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD)
    labels = recs[:, 0].copy()
    if labels.size and labels.max() > 9:
        raise CifarFormatError(f"{source}: label {int(labels.max())} outside 0..9")
    return Dataset(labels, recs[:, 1:].reshape((-1,) + IMAGE_SHAPE).copy())


def load_cifar10(paths) -> Dataset:
    """Read one file or several (concatenated in the given order)."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    parts = [parse_cifar10(Path(p).read_bytes(), str(p)) for p in paths]
    return Dataset(np.concatenate([d.labels for d in parts]), np.concatenate([d.images for d in parts]))


def write_cifar10(ds: Dataset, path) -> None:
    recs = np.empty((len(ds), RECORD), dtype=np.uint8)
    recs[:, 0] = ds.labels
    recs[:, 1:] = ds.images.reshape(len(ds), -1)
    Path(path).write_bytes(recs.tobytes())


def synthetic_cifar(n: int, seed: int = 0, noise: float = 80.0) -> Dataset:
    """Procedural 10-class images: each class is a colour tint plus an oriented grating.

    Stand-in for the real CIFAR-10 files when they are not available.
    """
    rng = np.random.default_rng(seed)
    labels = (np.arange(n) % 10).astype(np.uint8)
    rng.shuffle(labels)
    yy, xx = np.mgrid[0:32, 0:32].astype(np.float64)
    angles = np.linspace(0, np.pi, 5, endpoint=False)
    tints = np.array([[1.0, 0.6, 0.6], [0.6, 1.0, 0.6], [0.6, 0.6, 1.0], [1.0, 1.0, 0.6], [0.6, 1.0, 1.0]])
    images = np.empty((n, 3, 32, 32), dtype=np.uint8)
    for i, c in enumerate(labels):
        theta = angles[c % 5] + rng.normal(0, 0.25)
        freq = (0.3 if c < 5 else 0.5) + rng.normal(0, 0.06)
        phase = rng.uniform(0, 2 * np.pi)
        grating = np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        tint = tints[(c * 3) % 5] * rng.uniform(0.8, 1.2)
        img = 128 + 70 * grating[None] * tint[:, None, None] + rng.normal(0, noise, (3, 32, 32))
        images[i] = np.clip(np.rint(img), 0, 255)
    return Dataset(labels, images)

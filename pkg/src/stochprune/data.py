"""Dataset generation and ingestion.

Synthetic classification sets (gaussian blobs, interleaved spirals) for
desk-scale runs, generated deterministically from a seed, plus a bit-exact
reader for the CIFAR-10 binary batch format.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .net import DTYPE


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str
    provenance: dict

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DataError("features must be [N, d]")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError(
                f"{self.features.shape[0]} feature rows but "
                f"{self.labels.shape[0]} labels"
            )
        if self.labels.size:
            if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
                raise DataError(
                    f"labels must lie in [0, {self.num_classes})"
                )
        if not np.isfinite(self.features).all():
            raise DataError("non-finite feature values")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dims(self):
        return self.features.shape[1]


# Substream labels under the master seed: one independent stream per role.
STREAM_DATA = 1
STREAM_INIT = 2
STREAM_MASK = 3
STREAM_TRACK = 4
_SPLIT_CODES = {"train": 0, "test": 1}

# Spiral geometry: arms start at radius 1 and sweep SPIRAL_TURNS turns out
# to radius 4; the scatter around each arm and the amplitude of the d-2
# noise dims set the task difficulty.
SPIRAL_TURNS = 1.0
SPIRAL_ARM_STD = 0.15
SPIRAL_NOISE_DIM_STD = 0.5


def stream_rng(seed, label, extra=None):
    """Deterministic named substream of the master seed."""
    key = [int(seed), int(label)]
    if extra is not None:
        key.append(int(extra))
    return np.random.default_rng(key)


def _balanced_labels(num_samples, num_classes):
    counts = [num_samples // num_classes] * num_classes
    for k in range(num_samples % num_classes):
        counts[k] += 1
    return np.repeat(np.arange(num_classes, dtype=np.int64), counts)


def generate_synthetic(kind, num_classes, num_samples, num_dims, seed,
                       split="train"):
    """Deterministic synthetic classification set.

    gaussian_blobs: K unit-variance clusters, centers fixed on a radius-5
    circle in the first two dims (K=2 puts them 10 apart). spirals: K
    interleaved 2-D arms in the first two dims; the remaining d-2 dims are
    pure seeded noise. Classes are balanced to within one sample and rows
    are shuffled.
    """
    if num_classes < 2:
        raise DataError(f"need at least 2 classes, got {num_classes}")
    if num_samples < num_classes:
        raise DataError(
            f"need at least one sample per class "
            f"({num_samples} < {num_classes})"
        )
    if num_dims < 2:
        raise DataError(f"need at least 2 dims, got {num_dims}")
    if split not in _SPLIT_CODES:
        raise DataError(f"split must be 'train' or 'test', got {split!r}")
    rng = stream_rng(seed, STREAM_DATA, _SPLIT_CODES[split])
    labels = _balanced_labels(num_samples, num_classes)

    if kind == "gaussian_blobs":
        angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
        centers = np.zeros((num_classes, num_dims))
        centers[:, 0] = 5.0 * np.cos(angles)
        centers[:, 1] = 5.0 * np.sin(angles)
        features = centers[labels] + rng.standard_normal(
            (num_samples, num_dims))
    elif kind == "spirals":
        radial = rng.random(num_samples)
        radius = 1.0 + 3.0 * radial
        angle = 2.0 * np.pi * (labels / num_classes + SPIRAL_TURNS * radial)
        features = SPIRAL_NOISE_DIM_STD * rng.standard_normal(
            (num_samples, num_dims))
        features[:, 0] = radius * np.cos(angle) + SPIRAL_ARM_STD * features[:, 0]
        features[:, 1] = radius * np.sin(angle) + SPIRAL_ARM_STD * features[:, 1]
    else:
        raise DataError(f"unknown synthetic kind {kind!r}")

    order = rng.permutation(num_samples)
    return Dataset(
        features=features[order].astype(DTYPE),
        labels=labels[order],
        num_classes=num_classes,
        split=split,
        provenance={
            "kind": kind,
            "classes": num_classes,
            "samples": num_samples,
            "dims": num_dims,
            "seed": int(seed),
            "split": split,
        },
    )


def dataset_to_csv(dataset):
    """CSV with header f0..f{d-1},label; floats at float32 precision."""
    d = dataset.dims
    lines = [",".join([f"f{i}" for i in range(d)] + ["label"])]
    for row, label in zip(dataset.features, dataset.labels):
        lines.append(",".join(f"{v:.9g}" for v in row) + f",{int(label)}")
    return "\n".join(lines) + "\n"


# CIFAR-10 binary batch format: 10000 records per file, each 1 label byte
# followed by 3072 channel-major pixel bytes (R, G, B planes of 32x32).
CIFAR_RECORD_BYTES = 3073
CIFAR_RECORDS_PER_FILE = 10000
CIFAR_FILE_BYTES = CIFAR_RECORD_BYTES * CIFAR_RECORDS_PER_FILE
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILES = ["test_batch.bin"]
CIFAR_CLASSES = 10
CIFAR_PIXELS = 3072


def _parse_cifar_file(path):
    raw = Path(path).read_bytes()
    if len(raw) != CIFAR_FILE_BYTES:
        raise DataError(
            f"{Path(path).name}: expected {CIFAR_FILE_BYTES} bytes, "
            f"got {len(raw)}"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(
        CIFAR_RECORDS_PER_FILE, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        i = int(bad[0])
        raise DataError(
            f"{Path(path).name}: label byte {int(labels[i])} > 9 at "
            f"byte offset {i * CIFAR_RECORD_BYTES}"
        )
    pixels = records[:, 1:].astype(DTYPE) / DTYPE(255.0)
    return pixels, labels, hashlib.sha256(raw).hexdigest()


def load_cifar10(directory, normalize=False):
    """Read the six standard binary batches under `directory`.

    Pixels are scaled to [0, 1]; with normalize=True each of the three
    channel planes is standardized by the train split's mean/std.
    Returns (train Dataset, test Dataset).
    """
    directory = Path(directory)
    checksums = {}

    def read_files(names):
        parts = []
        labels = []
        for name in names:
            path = directory / name
            if not path.is_file():
                raise DataError(f"missing CIFAR-10 batch file {path}")
            px, lb, digest = _parse_cifar_file(path)
            parts.append(px)
            labels.append(lb)
            checksums[name] = digest
        return np.concatenate(parts), np.concatenate(labels)

    train_x, train_y = read_files(CIFAR_TRAIN_FILES)
    test_x, test_y = read_files(CIFAR_TEST_FILES)

    if normalize:
        planes = train_x.reshape(-1, 3, 1024)
        mean = planes.mean(axis=(0, 2), dtype=np.float64)
        std = planes.std(axis=(0, 2), dtype=np.float64)
        std[std == 0] = 1.0
        for x in (train_x, test_x):
            view = x.reshape(-1, 3, 1024)
            view -= mean[None, :, None].astype(DTYPE)
            view /= std[None, :, None].astype(DTYPE)

    def make(split, x, y):
        return Dataset(
            features=x,
            labels=y,
            num_classes=CIFAR_CLASSES,
            split=split,
            provenance={
                "kind": "cifar10",
                "dir": str(directory),
                "normalize": bool(normalize),
                "split": split,
                "sha256": {k: checksums[k] for k in sorted(checksums)},
            },
        )

    return make("train", train_x, train_y), make("test", test_x, test_y)

"""Datasets: synthetic cluster generation, CSV round trip, stratified splits.

A :class:`Dataset` is a fixed (features, labels) table with a thread-safe
access counter.  Every row served through :meth:`Dataset.batch` is counted,
which is what the federation layer's exclusion audit inspects: a client that
must not influence training should show zero reads across a training phase.
"""

from __future__ import annotations

import csv
import threading
import warnings
from dataclasses import dataclass

import numpy as np


class Dataset:
    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        n_classes: int,
        provenance: str = "memory",
    ):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] == 0:
            raise ValueError("features must be a non-empty (n, d) array")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must align with features")
        if n_classes < 1:
            raise ValueError("n_classes must be positive")
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ValueError("label outside [0, n_classes)")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        self.features = features
        self.labels = labels
        self.n_classes = int(n_classes)
        self.provenance = provenance
        self._access = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def access_count(self) -> int:
        with self._lock:
            return self._access

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Serve rows by index, bumping the access counter by the rows served."""
        idx = np.asarray(idx, dtype=np.intp)
        x, y = self.features[idx], self.labels[idx]
        with self._lock:
            self._access += int(idx.size)
        return x, y

    def subset(self, idx, provenance: str | None = None) -> "Dataset":
        """Structural row selection; the child gets a fresh access counter."""
        idx = np.asarray(idx, dtype=np.intp)
        if idx.size == 0:
            raise ValueError("subset must be non-empty")
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.n_classes,
            provenance if provenance is not None else self.provenance,
        )

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 2
    features: int = 8
    samples_per_class: int = 2500
    separation: float = 4.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if self.features < self.classes:
            raise ValueError("need at least as many features as classes")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")
        if self.noise < 0 or self.separation < 0:
            raise ValueError("noise and separation must be nonnegative")


def class_means(spec: SyntheticSpec) -> np.ndarray:
    """Centered one-hot directions scaled by the separation."""
    means = np.zeros((spec.classes, spec.features))
    for c in range(spec.classes):
        means[c, c] = spec.separation
    return means - means.mean(axis=0, keepdims=True)


def generate_synthetic(spec: SyntheticSpec, seed=None) -> Dataset:
    """Isotropic Gaussian clusters, `samples_per_class` points per class."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    means = class_means(spec)
    blocks, labels = [], []
    for c in range(spec.classes):
        blocks.append(
            means[c] + spec.noise * rng.standard_normal((spec.samples_per_class, spec.features))
        )
        labels.append(np.full(spec.samples_per_class, c, dtype=np.int64))
    return Dataset(np.vstack(blocks), np.concatenate(labels), spec.classes, "synthetic")


def with_feature_bias(ds: Dataset, bias: np.ndarray) -> Dataset:
    """Shift every feature vector by a constant offset (labels unchanged)."""
    bias = np.asarray(bias, dtype=np.float64)
    if bias.shape != (ds.n_features,):
        raise ValueError(f"bias must have shape ({ds.n_features},)")
    return Dataset(ds.features + bias, ds.labels, ds.n_classes, ds.provenance)


def save_csv(ds: Dataset, path) -> None:
    """Header ``label,f0,...,f{d-1}``, one row per sample."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(ds.n_features)])
        for y, x in zip(ds.labels, ds.features):
            writer.writerow([int(y)] + [repr(float(v)) for v in x])


def load_csv(path, n_classes: int | None = None) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "label":
            raise ValueError(f"{path}: expected header starting with 'label'")
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
    features = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return Dataset(features, labels, n_classes, provenance=str(path))


def split_712(ds: Dataset, seed) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified 7:1:2 train/val/test split; per-class remainders go to train."""
    if len(ds) < 10:
        raise ValueError("dataset too small to split 7:1:2 (need at least 10 items)")
    rng = np.random.default_rng(seed)
    train_idx, val_idx, test_idx = [], [], []
    for c in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size == 0:
            continue
        if idx.size < 10:
            warnings.warn(f"class {c} has only {idx.size} items; split is best-effort")
        rng.shuffle(idx)
        n_val = int(np.floor(0.1 * idx.size))
        n_test = int(np.floor(0.2 * idx.size))
        val_idx.extend(idx[:n_val])
        test_idx.extend(idx[n_val : n_val + n_test])
        train_idx.extend(idx[n_val + n_test :])
    return (
        ds.subset(np.sort(train_idx)),
        ds.subset(np.sort(val_idx)),
        ds.subset(np.sort(test_idx)),
    )


def batch_stream(ds: Dataset, batch_size: int, rng: np.random.Generator):
    """Endless shuffled mini-batches; each epoch is a fresh permutation and
    the epoch's tail batch may be smaller than `batch_size`."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    n = len(ds)
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield ds.batch(order[start : start + batch_size])

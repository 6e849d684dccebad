"""Dataset ingestion and the deterministic split planner.

Loads labeled tabular files (CSV or a compact binary format), generates
Gaussian-blob synthetic datasets, and carves the three-level split:
train/test, target/shadow, retain/forget.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .exceptions import LabelError, ParseError, SplitError

BINARY_MAGIC = b"UAD1"


@dataclass
class Dataset:
    features: np.ndarray  # n x d, float
    labels: np.ndarray  # n, int in [0, num_classes)
    num_classes: int
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.features) == 0:
            raise ValueError("dataset is empty")
        if len(self.features) != len(self.labels):
            raise ValueError("feature/label row counts differ")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise LabelError(
                f"labels outside [0, {self.num_classes}): "
                f"range [{self.labels.min()}, {self.labels.max()}]"
            )
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass
class SplitPlan:
    train_fraction: float = 0.8
    target_shadow_fraction: float = 0.5
    retain_fraction: float = 0.8
    forget_mode: str = "random_rows"  # or "single_class"
    forget_class: Optional[int] = None
    seed: int = 0

    def validate(self) -> None:
        for name in ("train_fraction", "target_shadow_fraction", "retain_fraction"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise SplitError(f"{name} must lie strictly in (0,1), got {v}")
        if self.forget_mode not in ("random_rows", "single_class"):
            raise SplitError(f"unknown forget_mode {self.forget_mode!r}")
        if self.forget_mode == "single_class" and self.forget_class is None:
            raise SplitError("forget_mode single_class needs forget_class")


@dataclass
class SplitBundle:
    target_train: np.ndarray
    shadow_pool: np.ndarray
    test: np.ndarray
    retain: np.ndarray
    forget: np.ndarray


@dataclass
class SyntheticSpec:
    n_samples: int = 1000
    n_features: int = 20
    n_classes: int = 5
    class_separation: float = 3.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < self.n_classes:
            raise ValueError("need at least one sample per class")
        if min(self.n_samples, self.n_features, self.n_classes) < 1:
            raise ValueError("all spec counts must be positive")
        if self.class_separation <= 0:
            raise ValueError("class_separation must be positive")


def _parse_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    labels = []
    n_cols = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if lineno == 1:
                # header detection: any non-numeric token means header row
                try:
                    [float(p) for p in parts]
                except ValueError:
                    n_cols = len(parts)
                    continue
            if n_cols is None:
                n_cols = len(parts)
            if len(parts) != n_cols:
                raise ParseError(
                    f"{path}:{lineno}: expected {n_cols} columns, found {len(parts)}"
                )
            try:
                values = [float(p) for p in parts[:-1]]
                label = int(parts[-1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric value ({exc})") from exc
            rows.append(values)
            labels.append(label)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=float), np.array(labels, dtype=np.int64)


def _parse_binary(path: Path) -> tuple[np.ndarray, np.ndarray, int]:
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != BINARY_MAGIC:
        raise ParseError(f"{path}: missing {BINARY_MAGIC!r} magic header")
    n, d, c = struct.unpack_from("<III", raw, 4)
    expected = 16 + n * d * 4 + n * 4
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(raw)}")
    feats = np.frombuffer(raw, dtype="<f4", count=n * d, offset=16).reshape(n, d)
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=16 + n * d * 4)
    return feats.astype(float), labels.astype(np.int64), c


def load_tabular(path: Union[str, Path], format: str = "csv_labeled") -> Dataset:
    """Load a labeled dataset; row order preserved as on disk."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    if format == "csv_labeled":
        feats, labels = _parse_csv(path)
        num_classes = None
    elif format == "binary_f32":
        feats, labels, num_classes = _parse_binary(path)
    else:
        raise ParseError(f"unknown format {format!r}")
    if labels.min() < 0 or labels.max() >= 2**31:
        raise LabelError(f"{path}: label out of range [{labels.min()}, {labels.max()}]")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(feats, labels, num_classes, name=path.stem)


def save_tabular(dataset: Dataset, path: Union[str, Path], format: str = "csv_labeled") -> None:
    """Write a dataset in a load_tabular-compatible format.

    binary_f32 round-trips bit-exactly (float32); CSV keeps 9 significant digits.
    """
    path = Path(path)
    if format == "csv_labeled":
        with open(path, "w", encoding="utf-8") as fh:
            for row, label in zip(dataset.features, dataset.labels):
                fh.write(",".join(f"{v:.9g}" for v in row) + f",{label}\n")
    elif format == "binary_f32":
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(
                struct.pack("<III", dataset.n_samples, dataset.n_features, dataset.num_classes)
            )
            fh.write(dataset.features.astype("<f4").tobytes())
            fh.write(dataset.labels.astype("<u4").tobytes())
    else:
        raise ParseError(f"unknown format {format!r}")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Gaussian class blobs with unit noise.

    Centroids are sampled once and rescaled so the minimum pairwise
    centroid distance equals class_separation (in noise-sigma units).
    Classes are balanced within one sample; deterministic under seed.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    centroids = rng.standard_normal((spec.n_classes, spec.n_features))
    if spec.n_classes > 1:
        dists = np.linalg.norm(centroids[:, None] - centroids[None, :], axis=2)
        min_dist = dists[np.triu_indices(spec.n_classes, k=1)].min()
        centroids *= spec.class_separation / min_dist
    labels = np.arange(spec.n_samples) % spec.n_classes
    features = centroids[labels] + rng.standard_normal((spec.n_samples, spec.n_features))
    return Dataset(features, labels, spec.n_classes, name="synthetic")


def _smaller_floor(n: int, fraction: float) -> int:
    """Size of the `fraction` part of n; the smaller side takes the floor.

    The epsilon absorbs binary-float fuzz (1 - 0.8 = 0.19999...).
    """
    if fraction <= 0.5:
        return int(np.floor(fraction * n + 1e-9))
    return n - int(np.floor((1 - fraction) * n + 1e-9))


def make_splits(dataset: Dataset, plan: SplitPlan) -> SplitBundle:
    """Seeded shuffle then sequential carving into the five index sets."""
    plan.validate()
    n = dataset.n_samples
    rng = np.random.default_rng(plan.seed)
    perm = rng.permutation(n)

    n_train_side = _smaller_floor(n, plan.train_fraction)
    test = perm[n_train_side:]
    rest = perm[:n_train_side]

    n_target = _smaller_floor(len(rest), plan.target_shadow_fraction)
    target_train = rest[:n_target]
    shadow_pool = rest[n_target:]

    if plan.forget_mode == "random_rows":
        n_retain = _smaller_floor(len(target_train), plan.retain_fraction)
        retain = target_train[:n_retain]
        forget = target_train[n_retain:]
    else:
        c = plan.forget_class
        mask = dataset.labels[target_train] == c
        if not mask.any():
            raise SplitError(f"class {c} absent from target_train")
        forget = target_train[mask]
        retain = target_train[~mask]

    for name, part in (
        ("test", test),
        ("target_train", target_train),
        ("shadow_pool", shadow_pool),
        ("retain", retain),
        ("forget", forget),
    ):
        if len(part) == 0:
            raise SplitError(f"split produced empty {name} set (n={n})")
    return SplitBundle(
        target_train=target_train,
        shadow_pool=shadow_pool,
        test=test,
        retain=retain,
        forget=forget,
    )

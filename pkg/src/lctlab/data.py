"""Imbalanced binary datasets: synthetic Gaussians, CSV ingestion, subsampling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .ndmath import Rng


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        # constant columns map to 0 instead of dividing by zero
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


@dataclass(frozen=True)
class Dataset:
    """Features with labels ``1`` (+, minority) and ``0`` (-, majority)."""

    features: np.ndarray
    labels: np.ndarray
    standardizer: Standardizer | None = None
    label_names: tuple[str, str] = ("0", "1")

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise InputError(f"features {x.shape} and labels {y.shape} do not line up")
        if not np.all(np.isfinite(x)):
            raise InputError("features contain NaN or Inf")
        if not np.all((y == 0) | (y == 1)):
            raise InputError("labels must be 0 or 1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_plus(self) -> int:
        return int(self.labels.sum())

    @property
    def n_minus(self) -> int:
        return len(self) - self.n_plus

    @property
    def beta(self) -> float:
        if self.n_plus == 0:
            raise InputError("dataset has no positive samples")
        return self.n_minus / self.n_plus

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, features=self.features[idx], labels=self.labels[idx])

    def batches(self, batch_size: int, rng: Rng | None = None):
        """Yield ``(x, y)`` mini-batches, shuffled when ``rng`` is given."""
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            idx = order[start:start + batch_size]
            yield self.features[idx], self.labels[idx]


def minority_count(n_majority: int, beta: float) -> int:
    """Minority samples kept for ratio ``beta``: ``floor(n_majority / beta)``."""
    return int(math.floor(n_majority / beta + 1e-9))


def subsample_to_beta(ds: Dataset, beta: float, rng: Rng) -> Dataset:
    """Randomly drop minority samples until ``n_minus / n_plus`` reaches ``beta``."""
    if beta < 1:
        raise InputError(f"beta must be >= 1, got {beta}")
    keep = minority_count(ds.n_minus, beta)
    if keep < 1:
        raise InputError(f"beta={beta} unreachable with {ds.n_minus} majority samples")
    pos = np.nonzero(ds.labels == 1)[0]
    if keep > pos.size:
        raise InputError(f"beta={beta} needs {keep} minority samples but only {pos.size} exist")
    chosen = pos[rng.choice(pos.size, keep)]
    idx = np.sort(np.r_[np.nonzero(ds.labels == 0)[0], chosen])
    return ds.subset(idx)


@dataclass(frozen=True)
class SyntheticSpec:
    """Two Gaussian classes in ``d`` dimensions.

    The majority class is centred at the origin, the minority at distance
    ``separation`` along the all-ones direction; both use ``covariance``
    (identity when omitted). Smaller ``separation`` means more overlap.
    """

    d: int = 10
    n_majority: int = 5000
    beta_target: float = 100.0
    separation: float = 1.5
    covariance: list | None = None
    minority_covariance: list | None = None
    n_test_per_class: int = 1000
    balanced_test: bool = True
    test_beta: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n_majority < 1:
            raise ConfigError("d and n_majority must be positive")
        if self.beta_target < 1 or self.n_majority / self.beta_target < 1:
            raise ConfigError(f"beta_target={self.beta_target} infeasible for n_majority={self.n_majority}")


def _chol(cov, d: int, name: str) -> np.ndarray:
    if cov is None:
        return np.eye(d)
    c = np.asarray(cov, dtype=np.float64)
    if c.shape != (d, d) or not np.allclose(c, c.T):
        raise ConfigError(f"{name} must be a symmetric {d}x{d} matrix")
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise ConfigError(f"{name} is not positive definite") from None


def _gaussian(rng: Rng, n: int, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    z = rng.normal(n * mean.size).reshape(n, mean.size)
    return mean + z @ chol.T


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Train set subsampled to ``beta_target``; test set balanced unless asked otherwise."""
    d = spec.d
    chol_neg = _chol(spec.covariance, d, "covariance")
    chol_pos = _chol(spec.minority_covariance, d, "minority_covariance") \
        if spec.minority_covariance is not None else chol_neg
    mu_neg = np.zeros(d)
    mu_pos = np.full(d, spec.separation / math.sqrt(d))
    streams = Rng(spec.seed).streams("train", "test", "subsample")
    rng = streams["train"]
    # full-size minority pool, then subsample as for a real dataset
    x_neg = _gaussian(rng, spec.n_majority, mu_neg, chol_neg)
    x_pos = _gaussian(rng, spec.n_majority, mu_pos, chol_pos)
    pool = Dataset(np.vstack([x_neg, x_pos]), np.r_[np.zeros(len(x_neg), int), np.ones(len(x_pos), int)])
    train = subsample_to_beta(pool, spec.beta_target, streams["subsample"])

    n_test_neg = spec.n_test_per_class
    n_test_pos = spec.n_test_per_class
    if not spec.balanced_test:
        n_test_pos = minority_count(n_test_neg, spec.test_beta or spec.beta_target)
    rng = streams["test"]
    t_neg = _gaussian(rng, n_test_neg, mu_neg, chol_neg)
    t_pos = _gaussian(rng, n_test_pos, mu_pos, chol_pos)
    test = Dataset(np.vstack([t_neg, t_pos]), np.r_[np.zeros(n_test_neg, int), np.ones(n_test_pos, int)])
    return train, test


def _read_csv(path, label_column: str):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if label_column not in header:
        raise InputError(f"{path}: no label column {label_column!r} in header {header}")
    if not rows:
        raise InputError(f"{path}: no data rows")
    li = header.index(label_column)
    feature_names = [h for i, h in enumerate(header) if i != li]
    labels, feats = [], []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header) or any(v.strip() == "" for v in row):
            raise InputError(f"{path}:{lineno}: missing value")
        labels.append(row[li].strip())
        try:
            feats.append([float(v) for i, v in enumerate(row) if i != li])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
    return feature_names, labels, np.array(feats, dtype=np.float64).reshape(len(rows), len(feature_names))


def _label_map(labels: list[str], path) -> tuple[str, str]:
    classes = sorted(set(labels))
    if len(classes) != 2:
        raise InputError(f"{path}: expected exactly 2 classes, found {len(classes)}: {classes[:5]}")
    counts = {c: labels.count(c) for c in classes}
    minority = min(classes, key=lambda c: (counts[c], c))
    majority = classes[0] if classes[1] == minority else classes[1]
    return majority, minority


def load_csv(path, label_column: str, *, standardizer: Standardizer | None = None,
             label_names: tuple[str, str] | None = None, standardize: bool = True) -> Dataset:
    """Read a headed CSV. The rarer class becomes ``+`` and features are standardized.

    Pass the training set's ``standardizer`` and ``label_names`` when
    loading a test file so both reuse the training statistics and mapping.
    """
    _, labels, x = _read_csv(path, label_column)
    if label_names is None:
        label_names = _label_map(labels, path)
    unknown = set(labels) - set(label_names)
    if unknown:
        raise InputError(f"{path}: labels {sorted(unknown)} not in {label_names}")
    y = np.array([1 if v == label_names[1] else 0 for v in labels], dtype=np.int64)
    if not standardize:
        return Dataset(x, y, None, tuple(label_names))
    if standardizer is None:
        standardizer = Standardizer.fit(x)
    return Dataset(standardizer.apply(x), y, standardizer, tuple(label_names))


def write_csv(path, ds: Dataset, label_column: str = "label") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(ds.dim)] + [label_column])
        for row, y in zip(ds.features.tolist(), ds.labels.tolist()):
            w.writerow([repr(v) for v in row] + [y])

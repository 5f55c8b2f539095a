"""Focal and vector-scaling (VS) losses for binary logits.

Logits are arrays whose last axis is ``(z_minus, z_plus)``. Labels use
``1`` for the minority (+) class and ``0`` for the majority (-) class; the
strings ``"+"`` and ``"-"`` are accepted wherever a label is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InputError

POS = 1
NEG = 0


class Logits(NamedTuple):
    z_minus: float
    z_plus: float


def as_label(y) -> np.ndarray:
    """Map labels given as 0/1, bools, or '+'/'-' to an int array of 0/1."""
    if isinstance(y, np.ndarray) and y.dtype.kind in "biu" and y.ndim > 0:
        if y.size and (y.min() < 0 or y.max() > 1):
            raise InputError("integer labels must be 0 or 1")
        return y.astype(np.int64, copy=False)
    if isinstance(y, str):
        y = [y]
        scalar = True
    else:
        scalar = np.ndim(y) == 0
    arr = np.atleast_1d(np.asarray(y, dtype=object))
    out = np.empty(arr.shape, dtype=np.int64)
    for i, v in np.ndenumerate(arr):
        if v in ("+", 1, True):
            out[i] = POS
        elif v in ("-", 0, False):
            out[i] = NEG
        else:
            raise InputError(f"unknown class label {v!r}")
    return out[0] if scalar else out


def _logits(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != 2:
        raise InputError(f"logits must have a trailing axis of size 2, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InputError("logits must be finite")
    return z


def softplus(x):
    """log(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def positive_score(z) -> np.ndarray:
    """Softmax probability of the + class."""
    z = _logits(z)
    return sigmoid(z[..., 1] - z[..., 0])


def cross_entropy(y, z) -> np.ndarray:
    y = as_label(y)
    z = _logits(z)
    margin = np.where(y == POS, z[..., 1] - z[..., 0], z[..., 0] - z[..., 1])
    return softplus(-margin)


@dataclass(frozen=True)
class FocalParams:
    alpha: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"focal alpha must lie in [0, 1], got {self.alpha}")
        if self.phi < 0:
            raise ConfigError(f"focal phi must be >= 0, got {self.phi}")

    def class_weight(self, y) -> np.ndarray:
        return np.where(as_label(y) == POS, self.alpha, 1.0 - self.alpha)


@dataclass(frozen=True)
class VsParams:
    gamma: float
    tau: float
    beta: float

    def __post_init__(self):
        if self.gamma < 0 or self.tau < 0:
            raise ConfigError(f"VS gamma and tau must be >= 0, got ({self.gamma}, {self.tau})")
        # beta == 1 is allowed so balanced training sets still work
        if not self.beta >= 1.0:
            raise ConfigError(f"imbalance ratio beta must be >= 1, got {self.beta}")

    def eta(self, z) -> np.ndarray:
        z = _logits(z)
        return z[..., 1] / self.beta**self.gamma - (z[..., 0] + self.tau * math.log(self.beta))


def focal_loss(y, z, p: FocalParams) -> np.ndarray:
    y = as_label(y)
    z = _logits(z)
    margin = np.where(y == POS, z[..., 1] - z[..., 0], z[..., 0] - z[..., 1])
    # 1 - p_y = sigmoid(-margin), -log p_y = softplus(-margin)
    return p.class_weight(y) * sigmoid(-margin) ** p.phi * softplus(-margin)


def vs_loss_binary(y, z, p: VsParams) -> np.ndarray:
    y = as_label(y)
    eta = p.eta(z)
    return np.where(y == POS, softplus(-eta), softplus(eta))


def vs_loss_full(y, z, p: VsParams, counts: tuple[int, int]) -> np.ndarray:
    """General affine-logit form evaluated from class counts ``(n_minus, n_plus)``."""
    n_minus, n_plus = counts
    if n_plus <= 0 or n_minus <= 0:
        raise InputError(f"class counts must be positive, got {counts}")
    if not math.isclose(n_minus / n_plus, p.beta, rel_tol=1e-9):
        raise InputError(f"counts {counts} inconsistent with beta={p.beta}")
    y = as_label(y)
    z = _logits(z)
    n_max = max(n_minus, n_plus)
    n = n_minus + n_plus
    delta = np.array([(n_minus / n_max) ** p.gamma, (n_plus / n_max) ** p.gamma])
    iota = np.array([p.tau * math.log(n_minus / n), p.tau * math.log(n_plus / n)])
    a = delta * z + iota
    m = np.max(a, axis=-1, keepdims=True)
    lse = (m + np.log(np.sum(np.exp(a - m), axis=-1, keepdims=True)))[..., 0]
    a_y = np.where(y == POS, a[..., 1], a[..., 0])
    return lse - a_y


def _focal_grad(y, z, p: FocalParams) -> np.ndarray:
    margin = np.where(y == POS, z[..., 1] - z[..., 0], z[..., 0] - z[..., 1])
    s = sigmoid(-margin)
    d_margin = -p.class_weight(y) * s**p.phi * (p.phi * (1.0 - s) * softplus(-margin) + s)
    sign = np.where(y == POS, 1.0, -1.0)
    return np.stack([-sign * d_margin, sign * d_margin], axis=-1)


def _vs_grad(y, z, p: VsParams) -> np.ndarray:
    eta = p.eta(z)
    d_eta = np.where(y == POS, -sigmoid(-eta), sigmoid(eta))
    return np.stack([-d_eta, d_eta / p.beta**p.gamma], axis=-1)


FAMILY_COORDS = {"focal": ("alpha", "phi"), "vs": ("gamma", "tau")}


@dataclass(frozen=True)
class LossSpec:
    """Maps a conditioning vector lambda onto a loss family's hyperparameters.

    ``coords`` lists which hyperparameters lambda carries (both by default);
    every other hyperparameter is taken from ``fixed``.
    """

    family: str
    beta: float = 1.0
    coords: tuple[str, ...] | None = None
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILY_COORDS:
            raise ConfigError(f"unknown loss family {self.family!r}; expected one of {sorted(FAMILY_COORDS)}")
        names = FAMILY_COORDS[self.family]
        coords = tuple(self.coords) if self.coords is not None else names
        if not coords or any(c not in names for c in coords):
            raise ConfigError(f"lambda coordinates {coords} invalid for {self.family}")
        missing = [n for n in names if n not in coords and n not in self.fixed]
        if missing:
            raise ConfigError(f"hyperparameters {missing} need a fixed value")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def params(self, lam) -> FocalParams | VsParams:
        lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
        if lam.shape != (self.dim,):
            raise ConfigError(f"lambda must have {self.dim} entries {self.coords}, got {lam.tolist()}")
        values = dict(self.fixed)
        values.update(zip(self.coords, (float(v) for v in lam)))
        if self.family == "focal":
            return FocalParams(values["alpha"], values["phi"])
        return VsParams(values["gamma"], values["tau"], self.beta)

    def value_and_grad(self, y, z, lam) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample losses and their gradients w.r.t. both logits."""
        p = self.params(lam)
        y = as_label(y)
        z = _logits(z)
        if self.family == "focal":
            return focal_loss(y, z, p), _focal_grad(y, z, p)
        return vs_loss_binary(y, z, p), _vs_grad(y, z, p)


def loss_value(family: str, y, z, lam, beta: float = 1.0) -> np.ndarray:
    return LossSpec(family, beta).value_and_grad(y, z, lam)[0]


def loss_grad(family: str, y, z, lam, beta: float = 1.0) -> np.ndarray:
    """Gradient ``(dl/dz_minus, dl/dz_plus)`` of the chosen loss."""
    return LossSpec(family, beta).value_and_grad(y, z, lam)[1]

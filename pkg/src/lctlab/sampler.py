"""Linear pdfs ``L(a, b, h_b)`` on an interval and per-mini-batch lambda draws."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .ndmath import Rng

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_PDF_RE = re.compile(rf"^\s*L\s*\(\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*\)\s*$")


@dataclass(frozen=True)
class LinearPdf:
    """Density that varies linearly from ``h_a`` at ``a`` to ``h_b`` at ``b``.

    ``a == b`` is a point mass at ``a``; ``h_b`` is ignored in that case.
    """

    a: float
    b: float
    h_b: float
    h_a: float

    @property
    def is_point(self) -> bool:
        return self.a == self.b

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.is_point:
            raise InputError("a point mass has no density")
        w = self.b - self.a
        val = self.h_a + (self.h_b - self.h_a) * (x - self.a) / w
        return np.where((x >= self.a) & (x <= self.b), val, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.is_point:
            return np.where(x >= self.a, 1.0, 0.0)
        s = np.clip(x, self.a, self.b) - self.a
        return self.h_a * s + (self.h_b - self.h_a) / (2.0 * (self.b - self.a)) * s**2

    def inverse_cdf(self, u: float) -> float:
        return inverse_cdf(self, u)

    def __str__(self) -> str:
        return f"L({self.a:g},{self.b:g},{self.h_b:g})"


def make_linear_pdf(a: float, b: float, h_b: float) -> LinearPdf:
    a, b, h_b = float(a), float(b), float(h_b)
    if b < a:
        raise ConfigError(f"L({a},{b},{h_b}): need b >= a")
    if a == b:
        return LinearPdf(a, b, h_b, h_b)
    h_max = 2.0 / (b - a)
    if h_max < h_b <= h_max * (1 + 1e-12):
        h_b = h_max
    if not 0.0 <= h_b <= h_max:
        raise ConfigError(f"L({a},{b},{h_b}): h_b must lie in [0, {h_max:.6g}] for unit area on [{a}, {b}]")
    # unit area: (h_a + h_b)(b - a) / 2 = 1
    h_a = max(h_max - h_b, 0.0)
    return LinearPdf(a, b, h_b, h_a)


def inverse_cdf(p: LinearPdf, u: float) -> float:
    """Solve ``F(x) = u`` for ``x`` in ``[a, b]``.

    With ``s = x - a`` the CDF is ``A s^2 + B s`` where ``B = h_a >= 0``.
    The root ``s = 2u / (B + sqrt(B^2 + 4 A u))`` is the cancellation-free
    member of the quadratic pair and reduces to ``u / B`` when ``A = 0``.
    """
    if not 0.0 <= u <= 1.0:
        raise InputError(f"u must lie in [0, 1], got {u}")
    if p.is_point:
        return p.a
    w = p.b - p.a
    if u == 0.0:
        return p.a
    if u == 1.0:
        return p.b
    if abs(p.h_a - p.h_b) < 1e-12:
        s = u * w
    else:
        A = (p.h_b - p.h_a) / (2.0 * w)
        B = p.h_a
        s = 2.0 * u / (B + math.sqrt(max(B * B + 4.0 * A * u, 0.0)))
    return min(max(p.a + s, p.a), p.b)


def parse_pdf(text) -> LinearPdf:
    """Parse ``"L(a,b,h_b)"``; a bare number ``c`` is the point mass at ``c``."""
    if isinstance(text, (int, float)):
        return make_linear_pdf(text, text, 0.0)
    m = _PDF_RE.match(str(text))
    if m:
        return make_linear_pdf(*(float(g) for g in m.groups()))
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"cannot parse distribution {text!r}; expected 'L(a,b,h_b)' or a number") from None
    return make_linear_pdf(v, v, 0.0)


def format_pdf(p: LinearPdf) -> str | float:
    return p.a if p.is_point else f"L({p.a!r},{p.b!r},{p.h_b!r})"


@dataclass(frozen=True)
class LambdaDistribution:
    """Independent linear pdf per lambda coordinate."""

    coords: tuple[LinearPdf, ...]

    @classmethod
    def parse(cls, items) -> "LambdaDistribution":
        return cls(tuple(parse_pdf(i) for i in items))

    @classmethod
    def point(cls, lam) -> "LambdaDistribution":
        return cls(tuple(make_linear_pdf(v, v, 0.0) for v in np.atleast_1d(lam)))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def is_point(self) -> bool:
        return all(c.is_point for c in self.coords)

    def describe(self) -> list:
        return [format_pdf(c) for c in self.coords]


def sample_lambda(dist: LambdaDistribution, rng: Rng) -> np.ndarray:
    """One draw per coordinate; always consumes one uniform per coordinate."""
    return np.array([inverse_cdf(c, rng.uniform01()) for c in dist.coords], dtype=np.float64)

"""Threshold-based binary classification metrics, ROC/PR curves, AP and Brier.

Thresholds follow the strict rule "predict + iff score > threshold". Each
curve point stores a threshold (a distinct score value, or -inf) that
reproduces it through ``confusion_at``; tied scores switch class together.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import InputError, MetricUndefinedError
from .losses import as_label

DEFAULT_RECALL_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99)


@dataclass(frozen=True)
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        labels = as_label(self.labels)
        labels = np.atleast_1d(labels)
        if scores.shape != labels.shape:
            raise InputError(f"{scores.size} scores but {labels.size} labels")
        if scores.size == 0:
            raise InputError("empty scored set")
        if not np.all(np.isfinite(scores)):
            raise InputError("scores must be finite")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @property
    def n_plus(self) -> int:
        return int(self.labels.sum())

    @property
    def n_minus(self) -> int:
        return int(self.labels.size - self.labels.sum())


class Confusion(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n_plus(self) -> int:
        return self.tp + self.fn

    @property
    def n_minus(self) -> int:
        return self.fp + self.tn


class CurvePoint(NamedTuple):
    x: float
    y: float
    threshold: float


Curve = list  # list[CurvePoint]


@dataclass(frozen=True)
class ScalarMetrics:
    tpr: float
    fpr: float
    precision: float
    overall_acc: float
    balanced_acc: float
    f1: float
    f_beta: float
    g_mean: float


def confusion_at(s: ScoredSet, threshold: float) -> Confusion:
    pred = s.scores > threshold
    pos = s.labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    return Confusion(tp, fp, s.n_minus - fp, s.n_plus - tp)


def _f_score(precision: float, recall: float, beta_f: float) -> float:
    b2 = beta_f * beta_f
    denom = b2 * precision + recall
    return 0.0 if denom == 0 else (1 + b2) * precision * recall / denom


def scalar_metrics(c: Confusion, beta_f: float = 1.0) -> ScalarMetrics:
    if c.n_plus < 1 or c.n_minus < 1:
        raise MetricUndefinedError(f"need both classes present, got {c}")
    tpr = c.tp / c.n_plus
    tnr = c.tn / c.n_minus
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    return ScalarMetrics(
        tpr=tpr,
        fpr=c.fp / c.n_minus,
        precision=precision,
        overall_acc=(c.tp + c.tn) / (c.n_plus + c.n_minus),
        balanced_acc=0.5 * (tpr + tnr),
        f1=_f_score(precision, tpr, 1.0),
        f_beta=_f_score(precision, tpr, beta_f),
        g_mean=math.sqrt(tpr * tnr),
    )


def _steps(s: ScoredSet):
    """Distinct scores (descending) with cumulative tp/fp counts at each group.

    Returns ``(thresholds, tp, fp)`` each of length ``m + 1`` where ``m`` is
    the number of distinct scores; entry ``k`` is the state after the top
    ``k`` score groups are predicted positive, and ``thresholds[k]`` is a
    strict threshold producing it.
    """
    order = np.argsort(-s.scores, kind="mergesort")
    scores = s.scores[order]
    pos = s.labels[order].astype(np.int64)
    last = np.r_[np.nonzero(np.diff(scores))[0], scores.size - 1]
    tp = np.r_[0, np.cumsum(pos)[last]]
    fp = np.r_[0, (last + 1) - tp[1:]]
    distinct = scores[last]
    thresholds = np.r_[distinct, -np.inf]
    return thresholds, tp, fp


def roc_auc(s: ScoredSet) -> tuple[Curve, float]:
    n_pos, n_neg = s.n_plus, s.n_minus
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("ROC AUC needs both classes present")
    thr, tp, fp = _steps(s)
    curve = [CurvePoint(f / n_neg, t / n_pos, float(h)) for t, f, h in zip(tp.tolist(), fp.tolist(), thr)]
    # trapezoid rule on integer counts, one rounding at the end
    area2 = sum((f1 - f0) * (t0 + t1) for f0, f1, t0, t1 in zip(fp[:-1].tolist(), fp[1:].tolist(),
                                                                  tp[:-1].tolist(), tp[1:].tolist()))
    return curve, area2 / (2 * n_pos * n_neg)


def _pr_points(s: ScoredSet):
    n_pos = s.n_plus
    if n_pos == 0:
        raise MetricUndefinedError("precision-recall needs at least one positive")
    thr, tp, fp = _steps(s)
    return thr[1:], tp[1:].tolist(), fp[1:].tolist(), n_pos


def pr_ap(s: ScoredSet) -> tuple[Curve, float]:
    """PR curve and the non-interpolated step-sum average precision."""
    thr, tp, fp, n_pos = _pr_points(s)
    curve = [CurvePoint(t / n_pos, t / (t + f), float(h)) for t, f, h in zip(tp, fp, thr)]
    ap = Fraction(0)
    prev = 0
    for t, f in zip(tp, fp):
        if t != prev:
            ap += Fraction(t - prev, n_pos) * Fraction(t, t + f)
            prev = t
    return curve, float(ap)


def precision_at_recall(s: ScoredSet, min_recall: float) -> float:
    """Best precision over thresholds whose recall is at least ``min_recall``."""
    if not 0 < min_recall <= 1:
        raise InputError(f"min_recall must lie in (0, 1], got {min_recall}")
    _, tp, fp, n_pos = _pr_points(s)
    best = 0.0
    for t, f in zip(tp, fp):
        if t / n_pos >= min_recall:
            best = max(best, t / (t + f))
    return best


def brier(s: ScoredSet) -> float:
    if np.any(s.scores < 0) or np.any(s.scores > 1):
        raise InputError("Brier score needs probabilities in [0, 1]")
    return float(np.mean((s.labels - s.scores) ** 2))


def report(s: ScoredSet, *, threshold: float = 0.5, beta_f: float = 1.0,
           recall_grid=DEFAULT_RECALL_GRID) -> tuple[dict, Curve, Curve]:
    """All scalar metrics for one scored set plus its ROC and PR curves."""
    roc, auc = roc_auc(s)
    pr, ap = pr_ap(s)
    c = confusion_at(s, threshold)
    scalars = {"auc": auc, "ap": ap, "brier": brier(s)}
    scalars.update(asdict(scalar_metrics(c, beta_f)))
    scalars.update(c._asdict())
    for r in recall_grid:
        scalars[f"precision@{r:g}"] = precision_at_recall(s, r)
    return scalars, roc, pr


def write_curve_csv(path, curve: Curve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "x", "y"])
        for p in curve:
            w.writerow([repr(float(p.threshold)), repr(float(p.x)), repr(float(p.y))])


def read_curve_csv(path) -> Curve:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [CurvePoint(float(r["x"]), float(r["y"]), float(r["threshold"])) for r in rows]

import math
from fractions import Fraction

import numpy as np
import pytest

from lctlab.errors import InputError, MetricUndefinedError
from lctlab.metrics import (
    Confusion,
    ScoredSet,
    brier,
    confusion_at,
    pr_ap,
    precision_at_recall,
    read_curve_csv,
    report,
    roc_auc,
    scalar_metrics,
    write_curve_csv,
)

FOUR = ScoredSet([0.9, 0.8, 0.4, 0.3], ["+", "-", "+", "-"])


def mann_whitney(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = Fraction(0)
    for p in pos:
        for n in neg:
            wins += 1 if p > n else Fraction(1, 2) if p == n else 0
    return wins / (len(pos) * len(neg))


def brute_force_ap(scores, labels):
    """Enumerate every candidate threshold, recount the confusion, step-sum."""
    n_pos = sum(labels)
    candidates = sorted(set(scores), reverse=True) + [-math.inf]
    prev_recall = Fraction(0)
    ap = Fraction(0)
    for t in candidates:
        tp = sum(1 for s, y in zip(scores, labels) if s > t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s > t and y == 0)
        if tp + fp == 0:
            continue
        recall = Fraction(tp, n_pos)
        ap += (recall - prev_recall) * Fraction(tp, tp + fp)
        prev_recall = recall
    return ap


def random_set(gen, n, ties):
    labels = gen.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    scores = gen.integers(0, 10, n) / 10 if ties else gen.uniform(size=n)
    return scores, labels


class TestWorkedExample:
    def test_auc(self):
        assert roc_auc(FOUR)[1] == 0.75

    def test_ap(self):
        assert pr_ap(FOUR)[1] == pytest.approx(0.8333, abs=5e-5)
        assert pr_ap(FOUR)[1] == float(Fraction(5, 6))

    def test_precision_at_high_recall(self):
        assert precision_at_recall(FOUR, 0.99) == pytest.approx(2 / 3)
        assert precision_at_recall(FOUR, 0.5) == 1.0

    def test_confusion_at_half(self):
        assert confusion_at(FOUR, 0.5) == Confusion(tp=1, fp=1, tn=1, fn=1)

    def test_threshold_is_strict(self):
        assert confusion_at(FOUR, 0.9).tp == 0
        assert confusion_at(FOUR, 0.8999).tp == 1


class TestOracles:
    @pytest.mark.parametrize("ties", [False, True])
    def test_auc_equals_mann_whitney(self, ties):
        gen = np.random.default_rng(10 + ties)
        for _ in range(50):
            scores, labels = random_set(gen, int(gen.integers(2, 201)), ties)
            assert roc_auc(ScoredSet(scores, labels))[1] == float(mann_whitney(scores.tolist(), labels.tolist()))

    @pytest.mark.parametrize("ties", [False, True])
    def test_ap_equals_brute_force(self, ties):
        gen = np.random.default_rng(20 + ties)
        for _ in range(50):
            scores, labels = random_set(gen, int(gen.integers(2, 101)), ties)
            assert pr_ap(ScoredSet(scores, labels))[1] == float(brute_force_ap(scores.tolist(), labels.tolist()))

    def test_curve_points_reproducible_from_thresholds(self):
        gen = np.random.default_rng(3)
        scores, labels = random_set(gen, 60, True)
        s = ScoredSet(scores, labels)
        roc, _ = roc_auc(s)
        assert (roc[0].x, roc[0].y) == (0.0, 0.0) and (roc[-1].x, roc[-1].y) == (1.0, 1.0)
        for p in roc:
            c = confusion_at(s, p.threshold)
            assert (c.fp / s.n_minus, c.tp / s.n_plus) == (p.x, p.y)
        pr, _ = pr_ap(s)
        for p in pr:
            c = confusion_at(s, p.threshold)
            assert (c.tp / s.n_plus, c.tp / (c.tp + c.fp)) == (p.x, p.y)

    def test_shuffled_labels_give_chance_auc(self):
        gen = np.random.default_rng(4)
        s = ScoredSet(gen.uniform(size=10_000), gen.integers(0, 2, 10_000))
        assert abs(roc_auc(s)[1] - 0.5) < 0.02

    def test_monotone_transform_invariance(self):
        gen = np.random.default_rng(5)
        scores, labels = random_set(gen, 150, True)
        a, b = ScoredSet(scores, labels), ScoredSet(np.exp(3 * scores) - 7, labels)
        assert roc_auc(a)[1] == roc_auc(b)[1]
        assert pr_ap(a)[1] == pr_ap(b)[1]

    def test_separable(self):
        s = ScoredSet([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
        assert roc_auc(s)[1] == 1.0 and pr_ap(s)[1] == 1.0
        assert precision_at_recall(s, 1.0) == 1.0

    def test_full_recall_precision(self):
        s = ScoredSet([0.9, 0.7, 0.6, 0.5, 0.2], [1, 0, 0, 1, 0])
        assert precision_at_recall(s, 1.0) == 0.5

    def test_single_class_errors(self):
        with pytest.raises(MetricUndefinedError):
            roc_auc(ScoredSet([0.1, 0.2], [1, 1]))
        with pytest.raises(MetricUndefinedError):
            pr_ap(ScoredSet([0.1, 0.2], [0, 0]))


class TestScalars:
    def test_balanced_accuracy(self):
        assert scalar_metrics(Confusion(tp=4, fp=1, tn=9, fn=1)).balanced_acc == pytest.approx(0.85)

    def test_perfect(self):
        m = scalar_metrics(Confusion(tp=3, fp=0, tn=5, fn=0))
        assert m.tpr == m.precision == m.overall_acc == m.balanced_acc == m.f1 == m.g_mean == 1.0
        assert m.fpr == 0.0

    def test_f_beta_one_is_f1(self):
        gen = np.random.default_rng(6)
        for _ in range(100):
            c = Confusion(*(int(v) for v in gen.integers(1, 50, 4)))
            m = scalar_metrics(c, beta_f=1.0)
            assert m.f_beta == m.f1

    def test_definitions(self):
        m = scalar_metrics(Confusion(tp=6, fp=2, tn=18, fn=4), beta_f=2.0)
        p, r = 6 / 8, 6 / 10
        assert m.f1 == pytest.approx(2 * p * r / (p + r))
        assert m.f_beta == pytest.approx(5 * p * r / (4 * p + r))
        assert m.g_mean == pytest.approx(math.sqrt(0.6 * 0.9))
        assert m.overall_acc == pytest.approx(24 / 30)

    def test_no_predicted_positives(self):
        m = scalar_metrics(Confusion(tp=0, fp=0, tn=5, fn=5))
        assert m.precision == 0.0 and m.f1 == 0.0


class TestBrier:
    def test_constant_half(self):
        assert brier(ScoredSet([0.5] * 6, [0, 1, 1, 0, 0, 0])) == 0.25

    def test_perfect(self):
        assert brier(ScoredSet([0.0, 1.0], [0, 1])) == 0.0

    def test_naive_loop(self):
        gen = np.random.default_rng(7)
        p, y = gen.uniform(size=300), gen.integers(0, 2, 300)
        total = 0.0
        for pi, yi in zip(p.tolist(), y.tolist()):
            total += (yi - pi) ** 2
        assert abs(brier(ScoredSet(p, y)) - total / 300) < 1e-12

    def test_rejects_non_probabilities(self):
        with pytest.raises(InputError):
            brier(ScoredSet([1.5, 0.2], [1, 0]))


class TestValidationAndIo:
    def test_length_mismatch(self):
        with pytest.raises(InputError):
            ScoredSet([0.1, 0.2], [1])

    def test_empty_and_nan(self):
        with pytest.raises(InputError):
            ScoredSet([], [])
        with pytest.raises(InputError):
            ScoredSet([float("nan")], [1])

    def test_report_keys(self):
        scalars, roc, pr = report(FOUR)
        assert scalars["auc"] == 0.75 and scalars["tp"] == 1
        assert "precision@0.99" in scalars and "g_mean" in scalars
        assert len(roc) == 5 and len(pr) == 4

    def test_curve_csv_round_trip(self, tmp_path):
        roc, _ = roc_auc(FOUR)
        write_curve_csv(tmp_path / "roc.csv", roc)
        assert read_curve_csv(tmp_path / "roc.csv") == roc

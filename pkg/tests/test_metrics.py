import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from miracle.errors import EvaluationError
from miracle.metrics import (auc, auc_trapezoid, evaluate, roc_curve, tpr_at_fpr)


def pairwise_auc(scores, labels):
    """Exhaustive pair enumeration oracle."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


class TestRocCurve:
    def test_perfect_separation_passes_corner(self):
        curve = roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert (0.0, 1.0) in {(f, t) for f, t, _ in curve.points}

    def test_complete_ties_diagonal(self):
        curve = roc_curve([0.5] * 6, [1, 0, 1, 0, 1, 0])
        assert [(f, t) for f, t, _ in curve.points] == [(0.0, 0.0), (1.0, 1.0)]

    def test_hand_enumerated_points(self):
        curve = roc_curve([0.9, 0.6, 0.7, 0.2], [1, 1, 0, 0])
        pts = {(f, t) for f, t, _ in curve.points}
        assert (0.0, 0.5) in pts and (0.5, 1.0) in pts

    def test_endpoints_and_monotone(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(4, 30))
            scores = rng.choice([0.1, 0.3, 0.5, 0.7], n)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                continue
            pts = roc_curve(scores, labels).points
            assert pts[0][:2] == (0.0, 0.0) and pts[-1][:2] == (1.0, 1.0)
            fprs = [p[0] for p in pts]
            tprs = [p[1] for p in pts]
            assert fprs == sorted(fprs) and tprs == sorted(tprs)
            assert all(0 <= f <= 1 and 0 <= t <= 1 for f, t in zip(fprs, tprs))

    def test_single_class_rejected(self):
        with pytest.raises(EvaluationError):
            roc_curve([0.1, 0.2], [1, 1])


class TestAuc:
    def test_hand_enumerated_pairs(self):
        assert auc([0.9, 0.6, 0.7, 0.2], [1, 1, 0, 0]) == pytest.approx(0.75)

    def test_chance_level_on_random(self):
        rng = np.random.default_rng(1)
        scores = rng.random(20_000)
        labels = rng.integers(0, 2, 20_000)
        assert auc(scores, labels) == pytest.approx(0.5, abs=0.03)

    def test_exact_vs_enumeration_small(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            n = int(rng.integers(2, 13))
            scores = np.round(rng.random(n), 1)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                continue
            assert auc(scores, labels) == pairwise_auc(scores, labels)

    def test_trapezoid_agrees_with_pairwise(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(4, 60))
            scores = np.round(rng.random(n), 2)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                continue
            assert abs(auc_trapezoid(roc_curve(scores, labels))
                       - auc(scores, labels)) <= 1e-12

    def test_invariance_under_monotone_transform(self):
        rng = np.random.default_rng(4)
        scores = rng.standard_normal(100)
        labels = rng.integers(0, 2, 100)
        base = auc(scores, labels)
        assert auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-15)
        assert auc(3 * scores + 7, labels) == pytest.approx(base, abs=1e-15)


class TestTprAtFpr:
    def test_threshold_enumeration_example(self):
        scores = [0.9, 0.8, 0.3, 0.6, 0.5, 0.4, 0.2, 0.1]
        labels = [1, 1, 1, 0, 0, 0, 0, 0]
        assert tpr_at_fpr(scores, labels, 0.2) == pytest.approx(2 / 3)

    def test_perfect_separation(self):
        scores = [0.9, 0.8, 0.2, 0.1]
        labels = [1, 1, 0, 0]
        for cap in (0.05, 0.2, 0.3, 0.9):
            assert tpr_at_fpr(scores, labels, cap) == 1.0

    def test_monotone_in_cap(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            scores = rng.random(30)
            labels = rng.integers(0, 2, 30)
            if labels.min() == labels.max():
                continue
            assert tpr_at_fpr(scores, labels, 0.3) >= tpr_at_fpr(scores, labels, 0.2)

    def test_matches_explicit_threshold_sweep(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            n = int(rng.integers(4, 25))
            scores = np.round(rng.random(n), 1)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                continue
            n_pos = labels.sum()
            n_neg = n - n_pos
            for cap in (0.2, 0.3):
                best = 0.0
                for thr in np.unique(scores):
                    pred = scores >= thr
                    fpr = np.sum(pred & (labels == 0)) / n_neg
                    tpr = np.sum(pred & (labels == 1)) / n_pos
                    if fpr <= cap:
                        best = max(best, tpr)
                assert tpr_at_fpr(scores, labels, cap) == best

    def test_bad_cap(self):
        with pytest.raises(EvaluationError):
            tpr_at_fpr([0.1, 0.9], [0, 1], 0.0)


class TestEvalReport:
    def test_auc_consistent_with_roc(self):
        rng = np.random.default_rng(7)
        scores = rng.random(200)
        labels = rng.integers(0, 2, 200)
        rep = evaluate(scores, labels)
        assert abs(rep.auc - auc_trapezoid(rep.roc)) <= 1e-12

    def test_json_and_csv_round(self):
        rep = evaluate([0.9, 0.6, 0.7, 0.2], [1, 1, 0, 0])
        d = rep.to_dict()
        assert set(d) == {"auc", "tpr_at_fpr", "roc", "counts"}
        assert d["tpr_at_fpr"].keys() == {"0.2", "0.3"}
        csv_text = rep.roc.to_csv()
        assert csv_text.startswith("threshold,fpr,tpr")
        assert csv_text.strip().splitlines()[1].endswith("0.0,0.0")
        assert csv_text.strip().splitlines()[-1].split(",")[1:] == ["1.0", "1.0"]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(min_value=0, max_value=1, allow_nan=False),
                          st.integers(min_value=0, max_value=1)),
                min_size=2, max_size=12))
def test_auc_equals_enumeration_property(pairs):
    scores = [p for p, _ in pairs]
    labels = [y for _, y in pairs]
    if len(set(labels)) < 2:
        return
    assert auc(scores, labels) == pairwise_auc(scores, labels)

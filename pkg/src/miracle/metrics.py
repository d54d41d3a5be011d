"""Threshold-free evaluation: empirical ROC curves, Mann-Whitney AUC and
sensitivity at fixed false-positive-rate operating points."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError

OPERATING_FPRS = (0.2, 0.3)


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvaluationError("scores and labels must be equal-length 1-D vectors")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos + n_neg != labels.size:
        raise EvaluationError("labels must be binary")
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("need at least one positive and one negative label")
    return scores, labels, n_pos, n_neg


@dataclass
class RocCurve:
    """Step-function ROC: (fpr, tpr, threshold) from threshold +inf downward."""
    points: list[tuple[float, float, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["threshold,fpr,tpr"]
        for fpr, tpr, thr in self.points:
            lines.append(f"{thr},{fpr},{tpr}")
        return "\n".join(lines) + "\n"


def roc_curve(scores, labels) -> RocCurve:
    """Empirical ROC sweeping thresholds over unique scores, ties grouped.

    Classification rule: predict positive when score >= threshold.
    """
    scores, labels, n_pos, n_neg = _validate(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    points = [(0.0, 0.0, np.inf)]
    tp = fp = 0
    i = 0
    n = s.size
    while i < n:
        thr = s[i]
        while i < n and s[i] == thr:
            if y[i] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / n_neg, tp / n_pos, float(thr)))
    return RocCurve(points=points)


def _rankdata(x: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties shared, as in the Mann-Whitney test."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: (concordant + 0.5 * tied pairs) / (n_pos * n_neg)."""
    scores, labels, n_pos, n_neg = _validate(scores, labels)
    ranks = _rankdata(scores)
    pos_rank_sum = float(np.sum(ranks[labels == 1]))
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auc_trapezoid(curve: RocCurve) -> float:
    """Trapezoid-rule area under a step ROC; equals the pairwise AUC."""
    fpr = np.array([p[0] for p in curve.points])
    tpr = np.array([p[1] for p in curve.points])
    return float(np.trapezoid(tpr, fpr))


def tpr_at_fpr(scores, labels, fpr_cap: float) -> float:
    """Best sensitivity over realizable thresholds with empirical FPR <= cap.

    Conservative step-function estimator: no interpolation between ROC points.
    """
    if not 0.0 < fpr_cap < 1.0:
        raise EvaluationError("fpr_cap must be in (0, 1)")
    curve = roc_curve(scores, labels)
    best = 0.0
    for fpr, tpr, _ in curve.points:
        if fpr <= fpr_cap and tpr > best:
            best = tpr
    return best


@dataclass
class EvalReport:
    auc: float
    tpr_at_fpr: dict[float, float]
    roc: RocCurve
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "tpr_at_fpr": {str(k): v for k, v in self.tpr_at_fpr.items()},
            "roc": [{"threshold": thr, "fpr": fpr, "tpr": tpr} for fpr, tpr, thr in self.roc.points],
            "counts": {"n_pos": self.n_pos, "n_neg": self.n_neg},
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, default=float)


def evaluate(scores, labels, operating_fprs=OPERATING_FPRS) -> EvalReport:
    scores, labels, n_pos, n_neg = _validate(scores, labels)
    curve = roc_curve(scores, labels)
    return EvalReport(
        auc=auc(scores, labels),
        tpr_at_fpr={cap: tpr_at_fpr(scores, labels, cap) for cap in operating_fprs},
        roc=curve,
        n_pos=n_pos,
        n_neg=n_neg,
    )

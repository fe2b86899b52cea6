"""Binary classification metrics over ranking scores and hard verdicts.

Threshold sweeps treat tied scores as one operating point: predictions at
sweep threshold t are `score >= t`, evaluated once per distinct score. Every
ratio with a zero denominator is defined as 0.0 (including the Matthews
coefficient) so degenerate inputs produce well-defined reports instead of NaN.
The ROC area uses trapezoidal integration; the precision-recall area uses the
rectangular step rule, with precision defined as 1.0 when nothing is predicted
positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

# Low-false-alarm operating points reported by every evaluation.
TPR_AT_FPR_LEVELS = (("1e-4", 1e-4), ("1e-3", 1e-3), ("1e-2", 1e-2), ("1e-1", 1e-1))


def _validate(labels, preds_or_scores) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(labels)
    x = np.asarray(preds_or_scores, dtype=np.float64)
    if y.shape != x.shape or y.ndim != 1:
        raise InputError(f"labels and values must be equal-length 1-D, got {y.shape} and {x.shape}")
    if y.size == 0:
        raise InputError("metrics need at least one sample")
    if not np.isin(y, (0, 1)).all():
        raise InputError("labels must be 0 or 1")
    return y.astype(np.int64), x


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def confusion(labels, preds) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) counting class 1 as positive."""
    y, p = _validate(labels, preds)
    p = p.astype(np.int64)
    tp = int(((y == 1) & (p == 1)).sum())
    fp = int(((y == 0) & (p == 1)).sum())
    tn = int(((y == 0) & (p == 0)).sum())
    fn = int(((y == 1) & (p == 0)).sum())
    return tp, fp, tn, fn


def accuracy(labels, preds) -> float:
    tp, fp, tn, fn = confusion(labels, preds)
    return _ratio(tp + tn, tp + fp + tn + fn)


def precision(labels, preds) -> float:
    tp, fp, _, _ = confusion(labels, preds)
    return _ratio(tp, tp + fp)


def recall(labels, preds) -> float:
    tp, _, _, fn = confusion(labels, preds)
    return _ratio(tp, tp + fn)


def f1(labels, preds) -> float:
    p, r = precision(labels, preds), recall(labels, preds)
    return _ratio(2 * p * r, p + r)


def mcc(labels, preds) -> float:
    """Matthews correlation; defined as 0.0 whenever the denominator is zero."""
    tp, fp, tn, fn = confusion(labels, preds)
    denom = math.sqrt(float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    return _ratio(tp * tn - fp * fn, denom)


def weighted_f1(labels, preds) -> float:
    """Per-class F1 averaged by class support fraction."""
    y, p = _validate(labels, preds)
    total = 0.0
    for cls in (0, 1):
        yc = (y == cls).astype(np.int64)
        pc = (p.astype(np.int64) == cls).astype(np.int64)
        total += (yc.sum() / y.size) * f1(yc, pc)
    return float(total)


def roc_points(labels, scores) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) per distinct threshold, starting at (0, 0, inf)."""
    y, s = _validate(labels, scores)
    pos = int((y == 1).sum())
    neg = y.size - pos
    points = [(0.0, 0.0, math.inf)]
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = int((pred & (y == 1)).sum())
        fp = int((pred & (y == 0)).sum())
        points.append((_ratio(fp, neg), _ratio(tp, pos), float(t)))
    return points


def roc_auc(labels, scores) -> float:
    points = roc_points(labels, scores)
    area = 0.0
    for (fpr0, tpr0, _), (fpr1, tpr1, _) in zip(points, points[1:]):
        area += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0
    return float(area)


def pr_points(labels, scores) -> list[tuple[float, float, float]]:
    """(recall, precision, threshold) per distinct threshold, high to low."""
    y, s = _validate(labels, scores)
    pos = int((y == 1).sum())
    points = []
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = int((pred & (y == 1)).sum())
        predicted = int(pred.sum())
        prec = tp / predicted if predicted else 1.0
        points.append((_ratio(tp, pos), prec, float(t)))
    return points


def pr_auc(labels, scores) -> float:
    """Step integral: sum of precision times recall increment per threshold."""
    area = 0.0
    prev_recall = 0.0
    for rec, prec, _ in pr_points(labels, scores):
        area += (rec - prev_recall) * prec
        prev_recall = rec
    return float(area)


def tpr_at_fpr(labels, scores, max_fpr: float) -> float:
    """Best achievable TPR among operating points with FPR <= max_fpr, else 0."""
    best = 0.0
    found = False
    for fpr, tpr, _ in roc_points(labels, scores):
        if fpr <= max_fpr:
            found = True
            best = max(best, tpr)
    return best if found else 0.0


@dataclass
class MetricReport:
    tn: int
    fp: int
    fn: int
    tp: int
    acc: float
    precision: float
    recall: float
    f1: float
    mcc: float
    weighted_f1: float
    roc_auc: float
    pr_auc: float
    tpr_at_fpr: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tn": self.tn,
            "fp": self.fp,
            "fn": self.fn,
            "tp": self.tp,
            "acc": self.acc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "mcc": self.mcc,
            "weighted_f1": self.weighted_f1,
            "roc_auc": self.roc_auc,
            "pr_auc": self.pr_auc,
            "tpr_at_fpr": dict(self.tpr_at_fpr),
        }


def compute(labels, scores, threshold: float = 0.5, preds=None) -> MetricReport:
    """Full report from ranking scores.

    Hard verdicts default to `score > threshold` (strict, matching the
    classifier's own decision rule); pass `preds` to score externally supplied
    verdicts instead. Curve metrics always come from the raw scores.
    """
    y, s = _validate(labels, scores)
    if preds is None:
        p = (s > threshold).astype(np.int64)
    else:
        _, p = _validate(labels, preds)
        p = p.astype(np.int64)
        if not np.isin(p, (0, 1)).all():
            raise InputError("preds must be 0 or 1")
    tp, fp_, tn, fn = confusion(y, p)
    return MetricReport(
        tn=tn,
        fp=fp_,
        fn=fn,
        tp=tp,
        acc=accuracy(y, p),
        precision=precision(y, p),
        recall=recall(y, p),
        f1=f1(y, p),
        mcc=mcc(y, p),
        weighted_f1=weighted_f1(y, p),
        roc_auc=roc_auc(y, s),
        pr_auc=pr_auc(y, s),
        tpr_at_fpr={name: tpr_at_fpr(y, s, level) for name, level in TPR_AT_FPR_LEVELS},
    )

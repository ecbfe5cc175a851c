"""Ranking and threshold metrics over scored binary labels."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {len(s)} vs {len(y)}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counted as one half."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC needs both classes (positives={n_pos}, negatives={n_neg})")
    # average ranks handle ties
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = (a + b + 1) / 2.0
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_at(scores, labels, threshold: float):
    s, y = _check(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return tp, fp, fn


def f1_at(scores, labels, threshold: float = 0.5) -> float:
    tp, fp, fn = confusion_at(scores, labels, threshold)
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def pr_curve(scores, labels) -> list[PrPoint]:
    """One point per distinct score, thresholds ascending (so recall is non-increasing).

    A score s counts as a positive prediction at threshold t when s >= t.
    """
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if len(s) == 0:
        return []
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1 - y_sorted)
    last = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    th, tp, fp = s_sorted[last], tp[last], fp[last]
    prec = tp / (tp + fp)
    rec = tp / n_pos if n_pos else np.zeros_like(prec, dtype=np.float64)
    return [PrPoint(float(t), float(p), float(r)) for t, p, r in zip(th[::-1], prec[::-1], rec[::-1])]


def recall_at_precision(scores, labels, p: float = 0.90) -> float:
    """Best recall over thresholds whose precision is at least ``p``; 0 if none qualifies."""
    best = 0.0
    for pt in pr_curve(scores, labels):
        if pt.precision >= p and pt.recall > best:
            best = pt.recall
    return best


def threshold_at_precision(scores, labels, p: float = 0.90) -> float | None:
    """Lowest threshold attaining the best qualifying recall (None when no threshold qualifies)."""
    best, best_t = -1.0, None
    for pt in pr_curve(scores, labels):
        if pt.precision >= p and pt.recall > best:
            best, best_t = pt.recall, pt.threshold
    return best_t


def write_pr_csv(path, points: list[PrPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for pt in points:
            w.writerow([repr(pt.threshold), repr(pt.precision), repr(pt.recall)])


def report(scores, labels, threshold: float = 0.5, p: float = 0.90) -> dict:
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    try:
        auc = roc_auc(s, y)
    except UndefinedMetricError:
        auc = None
    return {
        "auc": auc,
        "f1": f1_at(s, y, threshold),
        "recall_at_90p": recall_at_precision(s, y, p),
        "n_pos": n_pos,
        "n_neg": len(y) - n_pos,
    }


def write_report(path, rep: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rep, fh, indent=2, sort_keys=True)
        fh.write("\n")

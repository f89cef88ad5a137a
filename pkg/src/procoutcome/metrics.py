"""Exact ranking and threshold metrics for binary outcome scores.

Undefined metrics (single-class AUC_ROC, AUC_PR without positives, F1 with
no predicted or actual positives) are returned as ``None`` rather than 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

REPORT_COLUMNS = ("auc_roc", "f1", "accuracy", "auc_pr", "n_examples", "n_positive", "threshold")


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.shape} vs {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    return s, y.astype(np.int64)


def _tie_groups(sorted_scores):
    """Start indices of runs of equal values in a sorted array, plus the end."""
    change = np.flatnonzero(np.diff(sorted_scores)) + 1
    return np.concatenate([[0], change, [len(sorted_scores)]])


def auc_roc(scores, labels) -> float | None:
    """Area under the ROC curve via the Mann-Whitney rank sum with average ranks for ties.

    Computed as ``(2 * sum of positive ranks - P(P+1)) / (2PN)`` in integer
    arithmetic up to the final division.
    """
    s, y = _check(scores, labels)
    P = int(y.sum())
    N = len(y) - P
    if P == 0 or N == 0:
        return None
    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    ys = y[order]
    bounds = _tie_groups(ss)
    # twice the average rank of a group spanning 1-based ranks a..b is a + b
    two_rank_sum = 0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        pos = int(ys[lo:hi].sum())
        if pos:
            two_rank_sum += pos * (int(lo) + 1 + int(hi))
    return (two_rank_sum - P * (P + 1)) / (2 * P * N)


def auc_pr(scores, labels) -> float | None:
    """Average precision with tied scores entering one cut together.

    Every positive contributes the precision of the cut that first includes
    it; the result is the exactly rounded sum over positives divided by P.
    """
    s, y = _check(scores, labels)
    P = int(y.sum())
    if P == 0:
        return None
    order = np.argsort(-s, kind="mergesort")
    ss = s[order]
    ys = y[order]
    bounds = _tie_groups(-ss)
    pos_in_group = np.add.reduceat(ys, bounds[:-1])
    tp = np.cumsum(pos_in_group)
    n_cut = bounds[1:]
    precision = tp / n_cut
    return math.fsum(np.repeat(precision, pos_in_group)) / P


def f1_accuracy(scores, labels, threshold: float = 0.5) -> tuple[float | None, float]:
    """F1 and accuracy of the predictions ``score >= threshold``."""
    s, y = _check(scores, labels)
    if len(s) == 0:
        raise ValueError("empty input")
    pred = (s >= threshold).astype(np.int64)
    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    accuracy = float((pred == y).mean())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return None, accuracy
    return 2 * precision * recall / (precision + recall), accuracy


@dataclass(frozen=True)
class MetricsReport:
    auc_roc: float | None
    f1: float | None
    accuracy: float
    auc_pr: float | None
    n_examples: int
    n_positive: int
    threshold: float = 0.5

    @classmethod
    def from_scores(cls, scores, labels, threshold: float = 0.5) -> "MetricsReport":
        s, y = _check(scores, labels)
        f1, acc = f1_accuracy(s, y, threshold)
        return cls(auc_roc(s, y), f1, acc, auc_pr(s, y), len(y), int(y.sum()), threshold)

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> list[str]:
        return [format_cell(getattr(self, c)) for c in REPORT_COLUMNS]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        w.writerow(self.csv_row())
        return buf.getvalue()


assert tuple(f.name for f in fields(MetricsReport)) == REPORT_COLUMNS


def format_cell(value) -> str:
    """CSV cell text: blank for absent values, ``repr`` for floats."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)

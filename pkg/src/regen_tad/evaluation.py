"""Detection metrics: confusion counts, rates, and rank-based AUROC.

Window-level ground truth marks a window positive when its input span
intersects the anomalous time mask. AUROC uses the rank-sum formulation
with ties counted half; it is undefined (NaN) for single-class truth and
excluded from averages upstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    fpr: float
    auroc: float = float("nan")
    runtime_seconds: float = 0.0

    def to_dict(self) -> Dict[str, float]:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
            "auroc": self.auroc,
            "runtime_seconds": self.runtime_seconds,
        }


def window_truth_labels(
    time_mask: np.ndarray, anchors: Sequence[int], window_length: int
) -> np.ndarray:
    """A window is positive iff rows [anchor-L+1, anchor] touch the mask."""
    mask = np.asarray(time_mask, dtype=bool)
    cum = np.concatenate([[0], np.cumsum(mask)])
    labels = np.empty(len(anchors), dtype=int)
    for i, anchor in enumerate(anchors):
        lo = anchor - window_length + 1
        hi = anchor + 1
        labels[i] = 1 if cum[hi] - cum[lo] > 0 else 0
    return labels


def confusion_metrics(predicted: np.ndarray, truth: np.ndarray) -> MetricsReport:
    """Standard counts and rates; empty denominators resolve to zero."""
    pred = np.asarray(predicted).astype(int)
    true = np.asarray(truth).astype(int)
    if pred.shape != true.shape:
        raise MetricsError(f"length mismatch: {pred.shape} vs {true.shape}")
    tp = int(np.sum((pred == 1) & (true == 1)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    tn = int(np.sum((pred == 0) & (true == 0)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    fpr = fp / (fp + tn) if fp + tn > 0 else 0.0
    return MetricsReport(tp=tp, fp=fp, tn=tn, fn=fn, precision=precision,
                         recall=recall, f1=f1, fpr=fpr)


def auroc(scores: np.ndarray, truth: np.ndarray) -> float:
    """P(random positive outranks random negative), ties counted half.

    Computed from average ranks; returns NaN when truth is single-class.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth).astype(int)
    if s.shape != t.shape:
        raise MetricsError(f"length mismatch: {s.shape} vs {t.shape}")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    rank_sum_pos = float(ranks[t == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate_detection(
    predicted: np.ndarray,
    truth: np.ndarray,
    scores: Optional[np.ndarray] = None,
    runtime_seconds: float = 0.0,
) -> MetricsReport:
    report = confusion_metrics(predicted, truth)
    if scores is not None:
        report.auroc = auroc(scores, truth)
    report.runtime_seconds = runtime_seconds
    return report

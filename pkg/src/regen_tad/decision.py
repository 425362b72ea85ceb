"""Map smoothed anomaly scores to binary labels.

Two rules: rank-based (flag exactly the ceil(alpha*N) largest scores, ties
broken toward earlier indices) and threshold-based (strictly above the
calibrated cutoff). Optional post-processing removes runs shorter than a
minimum length and then dilates surviving runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

CEIL_TOLERANCE = 1e-9


class DecisionError(ValueError):
    pass


@dataclass
class DecisionConfig:
    mode: str = "rank"
    alpha: float = 0.05
    min_run: int = 1
    dilation_radius: int = 0

    def validate(self) -> None:
        if self.mode not in ("rank", "threshold"):
            raise DecisionError(f"unknown decision mode '{self.mode}'")
        if not (0.0 < self.alpha < 1.0):
            raise DecisionError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.min_run < 1 or self.dilation_radius < 0:
            raise DecisionError("min_run must be >= 1 and dilation_radius >= 0")


@dataclass
class DetectionResult:
    labels: np.ndarray  # int 0/1
    cutoff: float  # effective score cutoff (rank: smallest flagged score)
    removed_by_run_filter: int
    added_by_dilation: int

    def summary(self) -> Dict:
        return {
            "flagged": int(self.labels.sum()),
            "total": int(self.labels.size),
            "cutoff": self.cutoff,
            "removed_by_run_filter": self.removed_by_run_filter,
            "added_by_dilation": self.added_by_dilation,
        }


def flag_count(alpha: float, n: int) -> int:
    """ceil(alpha*n) robust to float representation (0.07*100 -> 7, not 8)."""
    return min(n, max(0, math.ceil(alpha * n - CEIL_TOLERANCE)))


def rank_decision(scores: np.ndarray, alpha: float) -> np.ndarray:
    """Flag exactly ceil(alpha*N) windows; cutoff ties go to earlier indices."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if n < 1:
        raise DecisionError("rank decision needs at least one score")
    m = flag_count(alpha, n)
    labels = np.zeros(n, dtype=int)
    if m > 0:
        order = np.argsort(-scores, kind="stable")
        labels[order[:m]] = 1
    return labels


def threshold_decision(scores: np.ndarray, tau: float) -> np.ndarray:
    """Strictly-greater comparison against the calibrated cutoff."""
    scores = np.asarray(scores, dtype=np.float64)
    return (scores > tau).astype(int)


def _runs(labels: np.ndarray):
    """Yield (start, end) inclusive bounds of each run of ones."""
    n = labels.size
    start = None
    for i in range(n + 1):
        active = i < n and labels[i] == 1
        if active and start is None:
            start = i
        elif not active and start is not None:
            yield start, i - 1
            start = None


def postprocess(labels: np.ndarray, min_run: int = 1, dilation_radius: int = 0) -> np.ndarray:
    """Run-length filter first, then dilation of the surviving runs."""
    labels = np.asarray(labels).astype(int)
    if min_run < 1 or dilation_radius < 0:
        raise DecisionError("min_run must be >= 1 and dilation_radius >= 0")
    filtered = labels.copy()
    for start, end in _runs(labels):
        if end - start + 1 < min_run:
            filtered[start : end + 1] = 0
    if dilation_radius == 0:
        return filtered
    dilated = filtered.copy()
    n = labels.size
    for start, end in _runs(filtered):
        lo = max(0, start - dilation_radius)
        hi = min(n - 1, end + dilation_radius)
        dilated[lo : hi + 1] = 1
    return dilated


def decide(scores: np.ndarray, cfg: DecisionConfig, tau: float) -> DetectionResult:
    """Apply the configured rule, then post-processing; track label flips."""
    cfg.validate()
    scores = np.asarray(scores, dtype=np.float64)
    if cfg.mode == "rank":
        raw = rank_decision(scores, cfg.alpha)
        flagged = scores[raw == 1]
        cutoff = float(flagged.min()) if flagged.size else float("inf")
    else:
        if not np.isfinite(tau):
            raise DecisionError("threshold mode requires a finite calibrated cutoff")
        raw = threshold_decision(scores, tau)
        cutoff = float(tau)
    final = postprocess(raw, cfg.min_run, cfg.dilation_radius)
    removed = int(np.sum((raw == 1) & (final == 0)))
    added = int(np.sum((raw == 0) & (final == 1)))
    return DetectionResult(
        labels=final, cutoff=cutoff, removed_by_run_filter=removed, added_by_dilation=added
    )

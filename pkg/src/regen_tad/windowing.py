"""Rolling windows, leakage-free splits, and input normalization.

Indexing is 0-based throughout: a window anchored at row ``t`` has input
rows ``t-L+1 .. t`` and future rows ``t+1 .. t+H``. Anchors are panel row
indices, so reports and CSV output carry the original row index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8


class SplitError(ValueError):
    """Split bounds violate the required train < calibration < test ordering."""


class WindowError(ValueError):
    """Panel too short for the requested window geometry."""


@dataclass
class WindowPair:
    """One rolling sample anchored at row ``index``."""

    index: int
    x: np.ndarray  # (L, p)
    f: np.ndarray  # (H, p)


@dataclass
class SplitIndices:
    """Anchor sets for the three stages, disjoint and ordered in time."""

    train: np.ndarray
    calibration: np.ndarray
    test: np.ndarray
    train_rows: int  # rows 0..train_rows-1 feed normalization statistics


@dataclass
class NormStats:
    """Per-feature location/scale fitted on training rows only."""

    mean: np.ndarray
    std: np.ndarray
    constant_features: List[int] = field(default_factory=list)


def build_windows(data: np.ndarray, length: int, horizon: int) -> List[WindowPair]:
    """All valid (input, future) pairs; anchors run L-1 .. T-H-1."""
    t = data.shape[0]
    if length < 1 or horizon < 1:
        raise WindowError("window length and horizon must be >= 1")
    if t < length + horizon:
        raise WindowError(
            f"panel has {t} rows; need at least L+H = {length + horizon}"
        )
    pairs = []
    for anchor in range(length - 1, t - horizon):
        pairs.append(
            WindowPair(
                index=anchor,
                x=data[anchor - length + 1 : anchor + 1],
                f=data[anchor + 1 : anchor + 1 + horizon],
            )
        )
    return pairs


def window_count(t: int, length: int, horizon: int) -> int:
    return max(0, t - horizon - length + 1)


def split_indices(t: int, length: int, horizon: int, t0: int, t1: int) -> SplitIndices:
    """Partition anchors so each stage only ever sees rows from its past.

    ``t0``/``t1`` are row counts: training rows are 0..t0-1, calibration
    rows t0..t1-1, test rows t1..t-1. Training anchors stop at t0-H-1 so
    no training future block reaches past row t0-1; the same guard applies
    to calibration anchors and row t1-1.
    """
    if not (length < t0 - horizon < t1 - horizon < t - horizon):
        raise SplitError(
            f"need L < T0-H < T1-H < T-H, got L={length}, H={horizon}, "
            f"T0={t0}, T1={t1}, T={t}"
        )
    train = np.arange(length - 1, t0 - horizon)
    calibration = np.arange(t0 - horizon, t1 - horizon)
    test = np.arange(t1 - horizon, t - horizon)
    return SplitIndices(train=train, calibration=calibration, test=test, train_rows=t0)


def fit_norm(data: np.ndarray, train_rows: int) -> NormStats:
    """Per-feature z-score statistics from the first ``train_rows`` rows."""
    if train_rows < 2:
        raise WindowError("need at least two training rows to fit normalization")
    block = data[:train_rows]
    mean = block.mean(axis=0)
    std = block.std(axis=0, ddof=1)
    constant = [int(j) for j in np.flatnonzero(std < SIGMA_FLOOR)]
    if constant:
        logger.warning("constant training features %s; std floored at %g", constant, SIGMA_FLOOR)
    std = np.maximum(std, SIGMA_FLOOR)
    return NormStats(mean=mean, std=std, constant_features=constant)


def apply_norm(data: np.ndarray, stats: NormStats) -> np.ndarray:
    """Standardize rows with fitted statistics (not idempotent)."""
    return (data - stats.mean) / stats.std

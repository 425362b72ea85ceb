"""Factor-level decomposition of detected anomalies.

Each flagged window gets, per factor: a standardized baseline deviation of
its window mean (raw units, calibration-period location/scale), a gradient
sensitivity of the latent anomaly score through the model's normalized
input path, and their product as the contribution. A cumulative-mass rule
selects the smallest factor subset explaining a target share of the total
contribution; the sector match ratio scores that ranking against a known
affected set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .autodiff import Tensor
from .backbone import BackboneState, encode

SIGMA_FLOOR = 1e-8
DEFAULT_CUMULATIVE_MASS = 0.8


class AttributionError(ValueError):
    pass


@dataclass
class AttributionBaseline:
    """Per-factor location/scale estimated on calibration rows."""

    mu: np.ndarray  # (p,)
    sigma: np.ndarray  # (p,) floored away from zero


def fit_baseline(panel_rows: np.ndarray) -> AttributionBaseline:
    if panel_rows.ndim != 2 or panel_rows.shape[0] < 2:
        raise AttributionError("baseline needs a (rows, p) block with >= 2 rows")
    return AttributionBaseline(
        mu=panel_rows.mean(axis=0),
        sigma=np.maximum(panel_rows.std(axis=0, ddof=1), SIGMA_FLOOR),
    )


def baseline_deviation(window: np.ndarray, baseline: AttributionBaseline) -> np.ndarray:
    """Absolute window-mean displacement per factor, in baseline sigmas."""
    means = np.asarray(window, dtype=np.float64).mean(axis=0)
    return np.abs(means - baseline.mu) / baseline.sigma


def latent_sensitivity(
    state: BackboneState, window_norm: np.ndarray, mu_z: np.ndarray
) -> np.ndarray:
    """Mean absolute input gradient of the squared latent displacement.

    The gradient of ``|z(X) - mu_z|^2`` is taken w.r.t. every cell of the
    normalized window and averaged over time per factor.
    """
    x = Tensor(window_norm[None], requires_grad=True)
    z = encode(state, x)
    centered = z - Tensor(np.asarray(mu_z)[None])
    score = (centered * centered).sum()
    score.backward()
    if x.grad is None:
        raise AttributionError("input gradient unavailable; state misconfigured")
    return np.abs(x.grad[0]).mean(axis=0)


@dataclass
class AttributionReport:
    window_index: int
    deviation: np.ndarray  # (p,)
    sensitivity: np.ndarray  # (p,)
    contribution: np.ndarray  # (p,) normalized to unit mass unless degenerate
    ranking: List[int]  # factor ids, descending contribution
    selected: List[int]  # smallest prefix reaching the cumulative-mass target
    cumulative_mass: float
    degenerate: bool = False
    factor_names: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        names = self.factor_names or [f"f{j}" for j in range(len(self.contribution))]
        rank_of = {j: r for r, j in enumerate(self.ranking)}
        selected = set(self.selected)
        return {
            "window": self.window_index,
            "cumulative_mass": self.cumulative_mass,
            "degenerate": self.degenerate,
            "factors": [
                {
                    "name": names[j],
                    "deviation": float(self.deviation[j]),
                    "sensitivity": float(self.sensitivity[j]),
                    "contribution": float(self.contribution[j]),
                    "rank": rank_of[j],
                    "selected": j in selected,
                }
                for j in range(len(self.contribution))
            ],
        }


def factor_contribution(
    deviation: np.ndarray,
    sensitivity: np.ndarray,
    cumulative_mass: float = DEFAULT_CUMULATIVE_MASS,
    normalize: bool = True,
    window_index: int = -1,
    factor_names: Sequence[str] = (),
) -> AttributionReport:
    """Combine deviations and sensitivities into ranked contributions.

    Ranking ties resolve toward the lower factor index. An all-zero product
    yields an empty selection flagged as degenerate.
    """
    delta = np.asarray(deviation, dtype=np.float64)
    gamma = np.asarray(sensitivity, dtype=np.float64)
    if delta.shape != gamma.shape:
        raise AttributionError("deviation and sensitivity lengths differ")
    if np.any(delta < 0) or np.any(gamma < 0):
        raise AttributionError("deviation and sensitivity must be non-negative")
    if not (0.0 < cumulative_mass <= 1.0):
        raise AttributionError(f"cumulative_mass must be in (0, 1], got {cumulative_mass}")

    contribution = delta * gamma
    total = float(contribution.sum())
    degenerate = total <= 0.0
    if normalize and not degenerate:
        contribution = contribution / total

    ranking = list(np.lexsort((np.arange(contribution.size), -contribution)))
    selected: List[int] = []
    if not degenerate:
        mass_total = float(contribution.sum())
        acc = 0.0
        for j in ranking:
            if contribution[j] <= 0.0:
                break
            selected.append(int(j))
            acc += float(contribution[j])
            if acc >= cumulative_mass * mass_total - 1e-12:
                break
    return AttributionReport(
        window_index=window_index,
        deviation=delta,
        sensitivity=gamma,
        contribution=contribution,
        ranking=[int(j) for j in ranking],
        selected=selected,
        cumulative_mass=cumulative_mass,
        degenerate=degenerate,
        factor_names=list(factor_names),
    )


def attribute_window(
    state: BackboneState,
    window_raw: np.ndarray,
    window_norm: np.ndarray,
    baseline: AttributionBaseline,
    mu_z: np.ndarray,
    cumulative_mass: float = DEFAULT_CUMULATIVE_MASS,
    window_index: int = -1,
    factor_names: Sequence[str] = (),
) -> AttributionReport:
    """Full attribution for one flagged window."""
    delta = baseline_deviation(window_raw, baseline)
    gamma = latent_sensitivity(state, window_norm, mu_z)
    return factor_contribution(
        delta,
        gamma,
        cumulative_mass=cumulative_mass,
        window_index=window_index,
        factor_names=factor_names,
    )


def sector_match_ratio(report: AttributionReport, true_set: Sequence[int]) -> float:
    """Share of truly affected factors among the |S| top-ranked contributors."""
    truth = sorted(set(int(j) for j in true_set))
    p = len(report.contribution)
    if not truth:
        raise AttributionError("true affected set must be non-empty")
    if len(truth) > p or max(truth) >= p or min(truth) < 0:
        raise AttributionError("true affected set exceeds the factor universe")
    top = set(report.ranking[: len(truth)])
    hits = sum(1 for j in truth if j in top)
    return hits / len(truth)

"""Window diagnostics, robust calibration, and score aggregation.

Six per-window diagnostics are computed from a frozen model: refined
forecast residual magnitude, reconstruction residual magnitude, mean
k-nearest-neighbor latent distance, lagged latent-dynamics deviation,
Mahalanobis latent distance under a shrinkage precision, and the entrywise
dispersion of the refined forecast residual. Calibration statistics
(per-component median/IQR, latent baseline, decision cutoff) are fitted on
the calibration split only and frozen; the cutoff is the (1-alpha)
quantile of the smoothed calibration aggregate so calibration and test
scores are exchangeable under the null.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

N_COMPONENTS = 6
DEFAULT_EPSILON = 1e-6
DEFAULT_RIDGE = 1e-6
DEFAULT_KNN_K = 20
DEFAULT_LATENT_LAG = 5
DEFAULT_EWMA_SPAN = 5


class CalibrationError(ValueError):
    pass


@dataclass
class ScoringConfig:
    knn_k: int = DEFAULT_KNN_K
    latent_lag: int = DEFAULT_LATENT_LAG
    ewma_span: int = DEFAULT_EWMA_SPAN
    epsilon: float = DEFAULT_EPSILON
    ridge: float = DEFAULT_RIDGE
    weights: Tuple[float, ...] = (1.0,) * N_COMPONENTS

    def validate(self) -> None:
        if self.knn_k < 1 or self.latent_lag < 1 or self.ewma_span < 1:
            raise CalibrationError("knn_k, latent_lag and ewma_span must be >= 1")
        if len(self.weights) != N_COMPONENTS:
            raise CalibrationError(f"need {N_COMPONENTS} component weights")
        if any(w < 0 for w in self.weights):
            raise CalibrationError("component weights must be non-negative")
        total = float(sum(self.weights))
        if abs(total - N_COMPONENTS) > 1e-9:
            raise CalibrationError(
                f"component weights must sum to {N_COMPONENTS}, got {total}"
            )


@dataclass
class DiagnosticContext:
    """Latent-side baseline shared by the diagnostics."""

    mu_z: np.ndarray  # (q,)
    precision_z: np.ndarray  # (q, q)
    bank: np.ndarray  # (n, q) calibration latents for the kNN score
    mu_lag_delta: np.ndarray  # (q,) mean lagged latent difference
    knn_k: int = DEFAULT_KNN_K


@dataclass
class CalibrationStats:
    medians: np.ndarray  # (6,)
    iqrs: np.ndarray  # (6,)
    context: DiagnosticContext
    weights: np.ndarray  # (6,)
    alpha: float
    tau: float
    epsilon: float = DEFAULT_EPSILON
    ewma_span: int = DEFAULT_EWMA_SPAN

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        for arr in (
            self.medians,
            self.iqrs,
            self.context.mu_z,
            self.context.precision_z,
            self.context.bank,
            self.context.mu_lag_delta,
            self.weights,
        ):
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            digest.update(str(arr.shape).encode())
            digest.update(arr.tobytes())
        digest.update(
            np.array(
                [self.alpha, self.tau, self.epsilon, self.ewma_span, self.context.knn_k]
            ).tobytes()
        )
        return digest.hexdigest()


# -- Ledoit-Wolf shrinkage ---------------------------------------------------

def ledoit_wolf_shrink(samples: np.ndarray) -> Tuple[np.ndarray, float]:
    """Convex combination of the sample covariance and a scaled identity.

    Returns ``(shrunk_cov, rho)`` with analytic intensity ``rho`` in [0, 1].
    The sample covariance uses the n-1 denominator; a degenerate dispersion
    (all samples equal) shrinks fully onto the scaled identity.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n, q = samples.shape
    if n < 2:
        raise CalibrationError(f"need at least 2 samples for covariance, got {n}")
    centered = samples - samples.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    mu = float(np.trace(cov)) / q
    target = mu * np.eye(q)
    dispersion = float(np.sum((cov - target) ** 2)) / q
    if dispersion <= 0.0:
        return target, 1.0
    # Analytic intensity from the 1/n moments (the hybrid with the n-1
    # covariance above is negligible at calibration sample sizes).
    cov_n = centered.T @ centered / n
    mu_n = float(np.trace(cov_n)) / q
    disp_n = float(np.sum((cov_n - mu_n * np.eye(q)) ** 2)) / q
    sq = centered**2
    beta_bar = float(np.sum(sq.T @ sq / n - cov_n**2)) / (n * q)
    beta_bar = max(beta_bar, 0.0)
    rho = 1.0 if disp_n <= 0.0 else min(beta_bar, disp_n) / disp_n
    shrunk = (1.0 - rho) * cov + rho * target
    return shrunk, rho


def ledoit_wolf_precision(samples: np.ndarray, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Symmetric positive-definite inverse of the ridge-stabilized shrunk
    covariance."""
    shrunk, _ = ledoit_wolf_shrink(samples)
    q = shrunk.shape[0]
    stabilized = shrunk + ridge * np.eye(q)
    chol = np.linalg.cholesky(stabilized)
    inv = np.linalg.inv(chol)
    precision = inv.T @ inv
    return 0.5 * (precision + precision.T)


# -- diagnostics ----------------------------------------------------------------

def knn_mean_distance(
    z: np.ndarray, bank: np.ndarray, k: int, exclude: Optional[int] = None
) -> float:
    """Mean Euclidean distance from ``z`` to its k nearest bank entries.

    ``exclude`` drops one bank row (leave-one-out for calibration windows).
    ``k`` is clamped to the available bank size with a warning.
    """
    if exclude is not None:
        bank = np.delete(bank, exclude, axis=0)
    n = bank.shape[0]
    if n == 0:
        raise CalibrationError("empty latent bank")
    if k > n:
        logger.warning("knn k=%d exceeds bank size %d; clamped", k, n)
        k = n
    d2 = np.sum((bank - z) ** 2, axis=1)
    nearest = np.partition(d2, k - 1)[:k]
    return float(np.mean(np.sqrt(np.maximum(nearest, 0.0))))


def compute_components(
    x: np.ndarray,
    f: np.ndarray,
    recon: np.ndarray,
    forecast2: np.ndarray,
    z: np.ndarray,
    ctx: DiagnosticContext,
    z_lag: Optional[np.ndarray] = None,
    exclude_bank_index: Optional[int] = None,
) -> np.ndarray:
    """Raw six-component diagnostic vector for one window.

    With no lagged latent available the dynamics component is zero (flagged
    by the caller); all components are finite and non-negative.
    """
    refined_residual = f - forecast2
    s1 = float(np.linalg.norm(f - forecast2))
    s2 = float(np.linalg.norm(x - recon))
    s3 = knn_mean_distance(z, ctx.bank, ctx.knn_k, exclude=exclude_bank_index)
    if z_lag is None:
        s4 = 0.0
    else:
        s4 = float(np.linalg.norm((z - z_lag) - ctx.mu_lag_delta))
    centered = z - ctx.mu_z
    s5 = float(centered @ ctx.precision_z @ centered)
    s6 = float(np.std(refined_residual))
    return np.array([s1, s2, s3, s4, s5, s6])


def build_context(
    latents: np.ndarray,
    lag_deltas: Optional[np.ndarray],
    ridge: float = DEFAULT_RIDGE,
    knn_k: int = DEFAULT_KNN_K,
) -> DiagnosticContext:
    """Latent baseline from calibration latents and their lagged differences."""
    latents = np.asarray(latents, dtype=np.float64)
    q = latents.shape[1]
    if lag_deltas is None or len(lag_deltas) == 0:
        mu_delta = np.zeros(q)
    else:
        mu_delta = np.asarray(lag_deltas, dtype=np.float64).mean(axis=0)
    return DiagnosticContext(
        mu_z=latents.mean(axis=0),
        precision_z=ledoit_wolf_precision(latents, ridge=ridge),
        bank=latents.copy(),
        mu_lag_delta=mu_delta,
        knn_k=knn_k,
    )


# -- standardization, aggregation, smoothing ---------------------------------------

def standardize_and_aggregate(
    components: np.ndarray, stats: "CalibrationStats"
) -> Tuple[np.ndarray, np.ndarray]:
    """Robust standardization then weighted mean: returns (s_tilde, S).

    Accepts a single 6-vector or an (n, 6) matrix.
    """
    comp = np.atleast_2d(np.asarray(components, dtype=np.float64))
    tilde = np.abs(comp - stats.medians) / (stats.iqrs + stats.epsilon)
    agg = tilde @ stats.weights / N_COMPONENTS
    if np.asarray(components).ndim == 1:
        return tilde[0], agg[0]
    return tilde, agg


def ewma(series: Sequence[float], span: int) -> np.ndarray:
    """Recursive exponential smoothing, seeded at the first observation."""
    if span < 1:
        raise CalibrationError(f"span must be >= 1, got {span}")
    values = np.asarray(series, dtype=np.float64)
    if values.size == 0:
        return values.copy()
    alpha = 2.0 / (span + 1.0)
    out = np.empty_like(values)
    out[0] = values[0]
    for i in range(1, values.size):
        out[i] = alpha * values[i] + (1.0 - alpha) * out[i - 1]
    return out


def fit_calibration(
    components: np.ndarray,
    context: DiagnosticContext,
    weights: Sequence[float],
    alpha: float,
    ewma_span: int = DEFAULT_EWMA_SPAN,
    epsilon: float = DEFAULT_EPSILON,
) -> CalibrationStats:
    """Freeze medians/IQRs, the latent baseline, and the decision cutoff.

    ``components`` must be the calibration windows' raw diagnostics in time
    order; the cutoff is the (1-alpha) quantile of their smoothed aggregate.
    """
    comp = np.asarray(components, dtype=np.float64)
    if comp.ndim != 2 or comp.shape[1] != N_COMPONENTS or comp.shape[0] == 0:
        raise CalibrationError("calibration components must be a non-empty (n, 6) matrix")
    if not (0.0 < alpha < 1.0):
        raise CalibrationError(f"alpha must be in (0, 1), got {alpha}")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (N_COMPONENTS,) or abs(float(w.sum()) - N_COMPONENTS) > 1e-9:
        raise CalibrationError(f"weights must be 6 values summing to {N_COMPONENTS}")

    medians = np.median(comp, axis=0)
    iqrs = np.quantile(comp, 0.75, axis=0) - np.quantile(comp, 0.25, axis=0)
    stats = CalibrationStats(
        medians=medians,
        iqrs=iqrs,
        context=context,
        weights=w,
        alpha=alpha,
        tau=float("nan"),
        epsilon=epsilon,
        ewma_span=ewma_span,
    )
    _, agg = standardize_and_aggregate(comp, stats)
    smoothed = ewma(agg, ewma_span)
    stats.tau = float(np.quantile(smoothed, 1.0 - alpha))
    return stats


def score_series(
    components: np.ndarray, stats: CalibrationStats
) -> Dict[str, np.ndarray]:
    """Standardize, aggregate and smooth a component matrix in time order."""
    tilde, agg = standardize_and_aggregate(components, stats)
    return {
        "standardized": tilde,
        "aggregate": agg,
        "smoothed": ewma(agg, stats.ewma_span),
    }

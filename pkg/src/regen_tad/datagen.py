"""Synthetic panel generation and anomaly injection.

Baselines cover light/heavy-tailed iid noise, GARCH volatility clustering,
static and GARCH factor structures, stable VAR dynamics, and smooth variance
drift. Injection mechanisms split into structural shifts (mean, trend,
variance, spike, collective, contextual) and market-regime disturbances
(directional shifts, volatility/liquidity stress, regime switches,
correlation breakdown, contagion, momentum crashes, flash crashes, fat
tails, microstructure noise, sector shocks). Every injection returns the
exact ground truth used so detection and attribution can be scored.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

BASELINE_DGPS = (
    "ar1-cross-cov",
    "iid-gaussian",
    "iid-student-t",
    "garch11",
    "static-factor",
    "factor-garch",
    "var1",
    "volatility-drift",
)

STRUCTURAL_MECHANISMS = (
    "mean-shift",
    "trend-shift",
    "variance-shift",
    "spike",
    "collective",
    "contextual",
)

MARKET_MECHANISMS = (
    "bear",
    "bull",
    "volatility-spike",
    "liquidity-dryup",
    "regime-switch",
    "correlation-breakdown",
    "contagion",
    "momentum-crash",
    "trend-reversal",
    "flash-crash",
    "fat-tail",
    "microstructure",
    "sector-shock",
)

# Injection magnitudes. Structural shifts are expressed in units of the
# per-column sample standard deviation of the clean baseline; market-regime
# magnitudes are in raw return units (baselines are calibrated near 1%
# daily dispersion, so e.g. a 0.02 directional shift is about two sigma).
MEAN_SHIFT_SIGMA = 1.5
TREND_SLOPE_SIGMA = 0.05
SPIKE_SIGMA = 3.0
VARIANCE_INFLATION = 2.0
COLLECTIVE_FRACTION = 0.25
CONTEXTUAL_SHIFT_SIGMA = 1.0

DIRECTIONAL_SHIFT = 0.02
DIRECTIONAL_FRACTION = 0.5
STRESS_CORRELATION = 0.6
REGIME_MEAN_SHIFT = 0.02
LOADING_NOISE_STD = 0.3
CONTAGION_SEED_FRACTION = 0.1
CONTAGION_GROWTH_FRACTION = 0.1
CONTAGION_SHIFT = 0.02
MOMENTUM_SLOPE = 0.01
FLASH_CRASH_SHIFT = -0.05
FAT_TAIL_DOF = 3.0
MICRO_AMPLITUDE = 0.01
MICRO_FREQUENCY = 2.0 * math.pi / 5.0
SECTOR_FRACTION = 0.25

# Baseline parameters (held fixed at desk scale).
BASE_SCALE = 0.01
AR1_PHI = 0.3
AR1_CROSS_CORR = 0.3
GARCH_OMEGA = 1e-5
GARCH_ALPHA = 0.08
GARCH_BETA = 0.90
FACTOR_COUNT = 3
FACTOR_LOADING_STD = 0.5
FACTOR_SCALE = 0.01
IDIO_SCALE = 0.01
STUDENT_T_DOF = 5.0
VAR1_SPECTRAL_RADIUS = 0.9
VOL_DRIFT_END_RATIO = 4.0


class GenerationError(ValueError):
    """Invalid scenario configuration or unusable injection target."""


class PanelFormatError(ValueError):
    """Malformed panel CSV (ragged rows, non-numeric or missing cells)."""


@dataclass
class Panel:
    """T x p observation matrix plus feature metadata.

    ``loadings``/``factors`` are populated by factor-structured baselines so
    that dependence-altering injections can rebuild affected cells.
    """

    data: np.ndarray
    feature_names: List[str]
    sector_map: Optional[Dict[str, str]] = None
    loadings: Optional[np.ndarray] = None
    factors: Optional[np.ndarray] = None

    @property
    def n_steps(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "Panel":
        return Panel(
            data=self.data.copy(),
            feature_names=list(self.feature_names),
            sector_map=dict(self.sector_map) if self.sector_map else None,
            loadings=None if self.loadings is None else self.loadings.copy(),
            factors=None if self.factors is None else self.factors.copy(),
        )


@dataclass
class AnomalyGroundTruth:
    """Exact record of which cells were perturbed and how."""

    time_mask: np.ndarray  # bool, length T
    feature_mask: np.ndarray  # bool, length p
    mechanism: str
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def affected_times(self) -> np.ndarray:
        return np.flatnonzero(self.time_mask)

    @property
    def affected_features(self) -> np.ndarray:
        return np.flatnonzero(self.feature_mask)


@dataclass
class ScenarioConfig:
    """One fully seeded simulation scenario."""

    dgp: str
    n_steps: int
    n_features: int
    mechanism: Optional[str] = None
    gamma: float = 0.0
    placement: str = "late"
    explicit_range: Optional[Tuple[int, int]] = None
    features: Optional[Sequence[int]] = None
    sector: Optional[str] = None
    seed: int = 0

    def validate(self) -> None:
        if self.dgp not in BASELINE_DGPS:
            raise GenerationError(f"unknown baseline dgp '{self.dgp}'")
        if self.mechanism is not None and self.mechanism not in (
            STRUCTURAL_MECHANISMS + MARKET_MECHANISMS
        ):
            raise GenerationError(f"unknown anomaly mechanism '{self.mechanism}'")
        if not (0.0 <= self.gamma < 0.5):
            raise GenerationError(f"gamma must be in [0, 0.5), got {self.gamma}")
        if self.placement not in ("early", "late", "explicit"):
            raise GenerationError(f"unknown placement '{self.placement}'")
        if self.placement == "explicit" and self.explicit_range is None:
            raise GenerationError("explicit placement requires explicit_range")
        if self.n_steps < 10 or self.n_features < 1:
            raise GenerationError("panel extents too small")


# -- baseline generators ------------------------------------------------------

def _default_names(p: int) -> List[str]:
    return [f"f{j}" for j in range(p)]


def _correlated_noise(rng: np.random.Generator, t: int, p: int, corr: float, scale: float) -> np.ndarray:
    # Constant-correlation Gaussian noise via a shared common component.
    common = rng.normal(size=(t, 1))
    idio = rng.normal(size=(t, p))
    return scale * (math.sqrt(corr) * common + math.sqrt(1.0 - corr) * idio)


def _garch_paths(rng: np.random.Generator, t: int, p: int, omega: float, alpha: float, beta: float) -> np.ndarray:
    z = rng.normal(size=(t, p))
    out = np.empty((t, p))
    var = np.full(p, omega / (1.0 - alpha - beta))
    for i in range(t):
        out[i] = np.sqrt(var) * z[i]
        var = omega + alpha * out[i] ** 2 + beta * var
    return out


def _spectral_rescale(a: np.ndarray, radius: float) -> np.ndarray:
    eig = np.max(np.abs(np.linalg.eigvals(a)))
    return a * (radius / eig)


def generate_baseline(cfg: ScenarioConfig) -> Panel:
    """Simulate a clean panel for the configured data-generating process."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    t, p = cfg.n_steps, cfg.n_features
    loadings: Optional[np.ndarray] = None
    factors: Optional[np.ndarray] = None

    if cfg.dgp == "iid-gaussian":
        data = rng.normal(scale=BASE_SCALE, size=(t, p))
    elif cfg.dgp == "iid-student-t":
        raw = rng.standard_t(STUDENT_T_DOF, size=(t, p))
        data = raw * BASE_SCALE * math.sqrt((STUDENT_T_DOF - 2.0) / STUDENT_T_DOF)
    elif cfg.dgp == "garch11":
        data = _garch_paths(rng, t, p, GARCH_OMEGA, GARCH_ALPHA, GARCH_BETA)
    elif cfg.dgp == "ar1-cross-cov":
        noise = _correlated_noise(rng, t, p, AR1_CROSS_CORR, BASE_SCALE)
        data = np.empty((t, p))
        state = np.zeros(p)
        for i in range(t):
            state = AR1_PHI * state + noise[i]
            data[i] = state
    elif cfg.dgp == "static-factor":
        loadings = rng.normal(scale=FACTOR_LOADING_STD, size=(p, FACTOR_COUNT))
        factors = rng.normal(scale=FACTOR_SCALE, size=(t, FACTOR_COUNT))
        data = factors @ loadings.T + rng.normal(scale=IDIO_SCALE, size=(t, p))
    elif cfg.dgp == "factor-garch":
        loadings = rng.normal(scale=FACTOR_LOADING_STD, size=(p, FACTOR_COUNT))
        factors = rng.normal(scale=FACTOR_SCALE, size=(t, FACTOR_COUNT))
        omega = IDIO_SCALE**2 * (1.0 - GARCH_ALPHA - GARCH_BETA)
        idio = _garch_paths(rng, t, p, omega, GARCH_ALPHA, GARCH_BETA)
        data = factors @ loadings.T + idio
    elif cfg.dgp == "var1":
        a = 0.5 * np.eye(p) + rng.normal(scale=0.1 / math.sqrt(p), size=(p, p))
        a = _spectral_rescale(a, VAR1_SPECTRAL_RADIUS)
        noise = rng.normal(scale=BASE_SCALE, size=(t, p))
        data = np.empty((t, p))
        state = np.zeros(p)
        for i in range(t):
            state = a @ state + noise[i]
            data[i] = state
    elif cfg.dgp == "volatility-drift":
        ramp = 1.0 + (VOL_DRIFT_END_RATIO - 1.0) * np.arange(t) / max(t - 1, 1)
        data = rng.normal(size=(t, p)) * (BASE_SCALE * np.sqrt(ramp))[:, None]
    else:  # pragma: no cover - guarded by validate()
        raise GenerationError(f"unknown baseline dgp '{cfg.dgp}'")

    return Panel(
        data=data,
        feature_names=_default_names(p),
        loadings=loadings,
        factors=factors,
    )


# -- injection helpers ---------------------------------------------------------

def _segment_bounds(t: int, gamma: float, placement: str, explicit_range: Optional[Tuple[int, int]]) -> Tuple[int, int]:
    """Inclusive 0-based (start, end) row indices of the anomalous segment."""
    if placement == "explicit":
        if explicit_range is None:
            raise GenerationError("explicit placement requires explicit_range")
        start, end = explicit_range
        if not (0 <= start <= end < t):
            raise GenerationError(f"explicit_range {explicit_range} out of panel 0..{t - 1}")
        return start, end
    length = int(round(gamma * t))
    if length < 1:
        raise GenerationError(f"gamma*T = {gamma * t:.3f} does not span a full time step")
    if placement == "early":
        start = math.ceil(0.1 * t)
        end = start + length - 1
    else:
        end = math.floor(0.9 * t) - 1
        start = end - length + 1
    if start < 0 or end >= t:
        raise GenerationError("anomalous segment does not fit inside the panel")
    return start, end


def _affected_features(
    p: int,
    fraction: Optional[float],
    seed: int,
    explicit: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Affected feature index set: explicit list, or the first ceil(fraction*p)
    entries of a seeded permutation, or all features."""
    if explicit is not None:
        idx = np.asarray(sorted(set(int(j) for j in explicit)), dtype=int)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= p:
            raise GenerationError("explicit feature subset out of range")
        return idx
    if fraction is None:
        return np.arange(p)
    count = max(1, math.ceil(fraction * p))
    perm = np.random.default_rng(seed).permutation(p)
    return np.sort(perm[: min(count, p)])


def _column_stats(data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return data.mean(axis=0), data.std(axis=0, ddof=1)


def _make_truth(t: int, p: int, rows: np.ndarray, cols: np.ndarray, mechanism: str, params: Dict[str, float]) -> AnomalyGroundTruth:
    time_mask = np.zeros(t, dtype=bool)
    time_mask[rows] = True
    feature_mask = np.zeros(p, dtype=bool)
    feature_mask[cols] = True
    return AnomalyGroundTruth(time_mask, feature_mask, mechanism, params)


def _scale_deviations(data: np.ndarray, rows: np.ndarray, cols: np.ndarray, mu: np.ndarray, factor: float) -> None:
    block = data[np.ix_(rows, cols)]
    data[np.ix_(rows, cols)] = mu[cols] + factor * (block - mu[cols])


# -- structural injections ------------------------------------------------------

def inject_structural(
    panel: Panel,
    mechanism: str,
    gamma: float,
    placement: str = "late",
    seed: int = 0,
    explicit_range: Optional[Tuple[int, int]] = None,
    features: Optional[Sequence[int]] = None,
) -> Tuple[Panel, AnomalyGroundTruth]:
    """Inject one structural anomaly mechanism; returns (panel, ground truth).

    Magnitudes are relative to the per-column sample standard deviation of
    the clean input panel. ``gamma == 0`` returns the panel unchanged with an
    empty mask.
    """
    if mechanism not in STRUCTURAL_MECHANISMS:
        raise GenerationError(f"unknown structural mechanism '{mechanism}'")
    t, p = panel.data.shape
    out = panel.copy()
    if gamma == 0.0 and explicit_range is None:
        return out, _make_truth(t, p, np.array([], dtype=int), np.array([], dtype=int), mechanism, {})

    mu, sigma = _column_stats(panel.data)
    start, end = _segment_bounds(t, gamma, placement, explicit_range)
    seg = np.arange(start, end + 1)
    fraction = COLLECTIVE_FRACTION if mechanism == "collective" else None
    cols = _affected_features(p, fraction, seed, features)
    data = out.data

    if mechanism == "mean-shift" or mechanism == "collective":
        shift = MEAN_SHIFT_SIGMA * sigma[cols]
        data[np.ix_(seg, cols)] += shift
        params = {"shift_sigma": MEAN_SHIFT_SIGMA}
    elif mechanism == "trend-shift":
        k = np.arange(seg.size, dtype=np.float64)[:, None]
        data[np.ix_(seg, cols)] += k * (TREND_SLOPE_SIGMA * sigma[cols])
        params = {"slope_sigma": TREND_SLOPE_SIGMA}
    elif mechanism == "variance-shift":
        _scale_deviations(data, seg, cols, mu, math.sqrt(VARIANCE_INFLATION))
        params = {"variance_factor": VARIANCE_INFLATION}
    elif mechanism == "spike":
        k_star = seg[seg.size // 2]
        data[k_star, cols] += SPIKE_SIGMA * sigma[cols]
        seg = np.array([k_star])
        params = {"spike_sigma": SPIKE_SIGMA}
    elif mechanism == "contextual":
        # The shift fires only where the lagged *clean* value is positive.
        lagged = panel.data[seg - 1, :][:, cols] > 0.0
        data[np.ix_(seg, cols)] += lagged * (CONTEXTUAL_SHIFT_SIGMA * sigma[cols])
        params = {"shift_sigma": CONTEXTUAL_SHIFT_SIGMA}
    else:  # pragma: no cover
        raise GenerationError(mechanism)

    return out, _make_truth(t, p, seg, cols, mechanism, params)


# -- market-regime injections -----------------------------------------------------

def inject_market_regime(
    panel: Panel,
    mechanism: str,
    gamma: float,
    placement: str = "late",
    seed: int = 0,
    explicit_range: Optional[Tuple[int, int]] = None,
    features: Optional[Sequence[int]] = None,
    sector: Optional[str] = None,
) -> Tuple[Panel, AnomalyGroundTruth]:
    """Inject one market-regime disturbance; returns (panel, ground truth)."""
    if mechanism not in MARKET_MECHANISMS:
        raise GenerationError(f"unknown market mechanism '{mechanism}'")
    t, p = panel.data.shape
    out = panel.copy()
    if gamma == 0.0 and explicit_range is None:
        return out, _make_truth(t, p, np.array([], dtype=int), np.array([], dtype=int), mechanism, {})

    rng = np.random.default_rng(seed)
    mu, sigma = _column_stats(panel.data)
    start, end = _segment_bounds(t, gamma, placement, explicit_range)
    seg = np.arange(start, end + 1)
    data = out.data

    half = DIRECTIONAL_FRACTION

    if mechanism in ("bear", "bull"):
        cols = _affected_features(p, half, seed, features)
        delta = DIRECTIONAL_SHIFT if mechanism == "bull" else -DIRECTIONAL_SHIFT
        data[np.ix_(seg, cols)] += delta
        params = {"delta": delta}
    elif mechanism == "volatility-spike":
        cols = _affected_features(p, half, seed, features)
        _scale_deviations(data, seg, cols, mu, math.sqrt(VARIANCE_INFLATION))
        params = {"variance_factor": VARIANCE_INFLATION}
    elif mechanism == "liquidity-dryup":
        cols = _affected_features(p, half, seed, features)
        cov = np.full((cols.size, cols.size), STRESS_CORRELATION)
        np.fill_diagonal(cov, 1.0)
        scale = math.sqrt(VARIANCE_INFLATION) * sigma[cols]
        cov = cov * np.outer(scale, scale)
        draws = rng.multivariate_normal(np.zeros(cols.size), cov, size=seg.size, method="cholesky")
        data[np.ix_(seg, cols)] = mu[cols] + draws
        params = {"variance_factor": VARIANCE_INFLATION, "correlation": STRESS_CORRELATION}
    elif mechanism == "regime-switch":
        cols = _affected_features(p, None, seed, features)
        _scale_deviations(data, seg, cols, mu, math.sqrt(VARIANCE_INFLATION))
        data[np.ix_(seg, cols)] += REGIME_MEAN_SHIFT
        params = {"mean_shift": REGIME_MEAN_SHIFT, "variance_factor": VARIANCE_INFLATION}
    elif mechanism == "correlation-breakdown":
        if panel.loadings is None or panel.factors is None:
            raise GenerationError(
                "correlation-breakdown requires a factor-structured baseline"
            )
        cols = _affected_features(p, half, seed, features)
        delta_b = rng.normal(scale=LOADING_NOISE_STD, size=(cols.size, panel.loadings.shape[1]))
        data[np.ix_(seg, cols)] += panel.factors[seg] @ delta_b.T
        params = {"loading_noise_std": LOADING_NOISE_STD}
    elif mechanism == "contagion":
        perm = np.random.default_rng(seed).permutation(p)
        seed_count = max(1, math.ceil(CONTAGION_SEED_FRACTION * p))
        growth = max(1, math.ceil(CONTAGION_GROWTH_FRACTION * p))
        union: set[int] = set()
        for k, row in enumerate(seg):
            count = min(p, seed_count + growth * k)
            active = perm[:count]
            union.update(int(j) for j in active)
            data[row, active] += CONTAGION_SHIFT
        cols = np.sort(np.array(list(union), dtype=int))
        params = {"delta": CONTAGION_SHIFT, "seed_fraction": CONTAGION_SEED_FRACTION}
    elif mechanism == "momentum-crash":
        cols = _affected_features(p, half, seed, features)
        k = np.arange(seg.size, dtype=np.float64)
        k_star = seg.size // 2
        ramp = np.where(k < k_star, MOMENTUM_SLOPE * k, -MOMENTUM_SLOPE * (k - k_star))
        data[np.ix_(seg, cols)] += ramp[:, None]
        params = {"slope": MOMENTUM_SLOPE}
    elif mechanism == "trend-reversal":
        cols = _affected_features(p, half, seed, features)
        k = np.arange(seg.size, dtype=np.float64)
        data[np.ix_(seg, cols)] += (MOMENTUM_SLOPE * k)[:, None]
        params = {"slope": MOMENTUM_SLOPE}
    elif mechanism == "flash-crash":
        cols = _affected_features(p, None, seed, features)
        k_star = seg[seg.size // 2]
        data[k_star, cols] += FLASH_CRASH_SHIFT
        seg = np.array([k_star])
        params = {"delta": FLASH_CRASH_SHIFT}
    elif mechanism == "fat-tail":
        cols = _affected_features(p, None, seed, features)
        draws = rng.standard_t(FAT_TAIL_DOF, size=(seg.size, cols.size))
        unit = math.sqrt((FAT_TAIL_DOF - 2.0) / FAT_TAIL_DOF)
        data[np.ix_(seg, cols)] = mu[cols] + sigma[cols] * unit * draws
        params = {"dof": FAT_TAIL_DOF}
    elif mechanism == "microstructure":
        cols = _affected_features(p, half, seed, features)
        k = np.arange(seg.size, dtype=np.float64)
        data[np.ix_(seg, cols)] += (MICRO_AMPLITUDE * np.sin(MICRO_FREQUENCY * k))[:, None]
        params = {"amplitude": MICRO_AMPLITUDE, "frequency": MICRO_FREQUENCY}
    elif mechanism == "sector-shock":
        cols = _sector_columns(panel, sector, seed, features)
        shift = MEAN_SHIFT_SIGMA * sigma[cols]
        data[np.ix_(seg, cols)] += shift
        params = {"shift_sigma": MEAN_SHIFT_SIGMA}
    else:  # pragma: no cover
        raise GenerationError(mechanism)

    return out, _make_truth(t, p, seg, cols, mechanism, params)


def _sector_columns(
    panel: Panel,
    sector: Optional[str],
    seed: int,
    features: Optional[Sequence[int]],
) -> np.ndarray:
    if features is not None:
        return _affected_features(panel.n_features, None, seed, features)
    if panel.sector_map:
        if sector is None:
            sector = sorted(set(panel.sector_map.values()))[0]
        cols = [
            j
            for j, name in enumerate(panel.feature_names)
            if panel.sector_map.get(name) == sector
        ]
        if not cols:
            raise GenerationError(f"sector '{sector}' has no member features")
        return np.asarray(cols, dtype=int)
    return _affected_features(panel.n_features, SECTOR_FRACTION, seed, None)


def inject(panel: Panel, cfg: ScenarioConfig) -> Tuple[Panel, AnomalyGroundTruth]:
    """Dispatch to the structural or market injector named by ``cfg``."""
    if cfg.mechanism is None or (cfg.gamma == 0.0 and cfg.explicit_range is None):
        t, p = panel.data.shape
        empty = _make_truth(t, p, np.array([], dtype=int), np.array([], dtype=int), cfg.mechanism or "none", {})
        return panel.copy(), empty
    common = dict(
        gamma=cfg.gamma,
        placement=cfg.placement,
        seed=cfg.seed,
        explicit_range=cfg.explicit_range,
        features=cfg.features,
    )
    if cfg.mechanism in STRUCTURAL_MECHANISMS:
        return inject_structural(panel, cfg.mechanism, **common)
    return inject_market_regime(panel, cfg.mechanism, sector=cfg.sector, **common)


def simulate_scenario(cfg: ScenarioConfig) -> Tuple[Panel, AnomalyGroundTruth]:
    """Generate the baseline and apply the configured injection."""
    baseline = generate_baseline(cfg)
    return inject(baseline, cfg)


# -- panel CSV I/O ---------------------------------------------------------------

def load_panel_csv(path: str, has_header: bool = True, sector_path: Optional[str] = None) -> Panel:
    """Read a rectangular numeric CSV: rows are time steps, columns features."""
    rows: List[List[float]] = []
    names: Optional[List[str]] = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for line_no, record in enumerate(reader):
            if not record:
                continue
            if line_no == 0 and has_header:
                names = [cell.strip() for cell in record]
                continue
            parsed = []
            for col, cell in enumerate(record):
                try:
                    value = float(cell)
                except ValueError as exc:
                    raise PanelFormatError(
                        f"non-numeric cell at row {line_no}, column {col}: '{cell}'"
                    ) from exc
                if not math.isfinite(value):
                    raise PanelFormatError(
                        f"non-finite cell at row {line_no}, column {col}: '{cell}'"
                    )
                parsed.append(value)
            if rows and len(parsed) != len(rows[0]):
                raise PanelFormatError(
                    f"ragged row {line_no}: {len(parsed)} cells, expected {len(rows[0])}"
                )
            rows.append(parsed)
    if not rows:
        raise PanelFormatError(f"panel file '{path}' contains no data rows")
    data = np.asarray(rows, dtype=np.float64)
    if names is None:
        names = _default_names(data.shape[1])
    elif len(names) != data.shape[1]:
        raise PanelFormatError(
            f"header has {len(names)} names for {data.shape[1]} columns"
        )
    sector_map = load_sector_map(sector_path) if sector_path else None
    return Panel(data=data, feature_names=names, sector_map=sector_map)


def write_panel_csv(panel: Panel, path: str) -> None:
    """Write a panel with 17-significant-digit cells (bit round-trip)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(panel.feature_names)
        for row in panel.data:
            writer.writerow([format(v, ".17g") for v in row])


def load_sector_map(path: str) -> Dict[str, str]:
    """Sidecar format: CSV with ``feature,sector`` rows (header optional)."""
    mapping: Dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for record in reader:
            if len(record) < 2:
                continue
            feature, sector = record[0].strip(), record[1].strip()
            if feature.lower() == "feature" and sector.lower() == "sector":
                continue
            mapping[feature] = sector
    if not mapping:
        raise PanelFormatError(f"sector file '{path}' has no feature,sector rows")
    return mapping

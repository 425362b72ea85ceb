"""End-to-end detection run over one panel.

Stage I purifies the training windows by reconstruction error, Stage II
trains the full model on the purified set, calibration freezes component
medians/IQRs plus the latent baseline and the decision cutoff on the
calibration split, and Stage III scores the test split, applies the
decision rule, and attributes flagged windows to factors.

All statistics attached to a scored window are functions of rows at or
before the calibration boundary; test rows never feed normalization or
calibration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .attribution import (
    AttributionBaseline,
    AttributionReport,
    attribute_window,
    fit_baseline,
)
from .backbone import (
    BackboneConfig,
    BackboneState,
    evaluate_windows,
    init_state,
    train_backbone,
)
from .datagen import Panel
from .decision import DecisionConfig, DetectionResult, decide
from .purify import PurifyConfig, PurifyReport, purify
from .scoring import (
    CalibrationStats,
    DiagnosticContext,
    ScoringConfig,
    build_context,
    ewma,
    fit_calibration,
    standardize_and_aggregate,
)
from .windowing import (
    NormStats,
    SplitIndices,
    apply_norm,
    build_windows,
    fit_norm,
    split_indices,
)


@dataclass
class PipelineConfig:
    """Everything one detection run needs besides the panel and the seed."""

    window_length: int = 36
    horizon: int = 5
    train_rows: int = 300
    calibration_rows: int = 400
    backbone: Dict[str, object] = field(default_factory=dict)
    purify: PurifyConfig = field(default_factory=PurifyConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    attribution_mass: float = 0.8
    run_attribution: bool = True

    def build_backbone(self, n_features: int) -> BackboneConfig:
        cfg = BackboneConfig(
            window_length=self.window_length,
            horizon=self.horizon,
            n_features=n_features,
            **self.backbone,
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.purify.validate()
        self.scoring.validate()
        self.decision.validate()
        if not (0.0 < self.attribution_mass <= 1.0):
            raise ValueError("attribution_mass must be in (0, 1]")


@dataclass
class PipelineResult:
    splits: SplitIndices
    norm: NormStats
    state: BackboneState
    purify_report: PurifyReport
    calibration: CalibrationStats
    calibration_hash: str
    cal_components: np.ndarray  # (n_cal, 6)
    test_components: np.ndarray  # (n_test, 6)
    test_standardized: np.ndarray  # (n_test, 6)
    test_aggregate: np.ndarray
    test_smoothed: np.ndarray
    detection: DetectionResult
    attribution_baseline: AttributionBaseline
    attributions: List[AttributionReport]
    lag_missing: int
    timings: Dict[str, float]

    @property
    def test_anchors(self) -> np.ndarray:
        return self.splits.test

    @property
    def labels(self) -> np.ndarray:
        return self.detection.labels


def _component_matrix(
    outputs: Dict[str, np.ndarray],
    positions: Sequence[int],
    anchors: Sequence[int],
    latent_by_anchor: Dict[int, np.ndarray],
    ctx: DiagnosticContext,
    lag: int,
) -> Tuple[np.ndarray, int]:
    """Raw six-component rows for the windows at ``positions``.

    Returns the matrix and the count of windows with no lag-``lag``
    predecessor (their dynamics component is zero).
    """
    latents = outputs["latent"][positions]
    refined = outputs["refined_residual"][positions]
    recon_sq = outputs["recon_sq_error"][positions]
    n = len(positions)

    s1 = np.linalg.norm(refined.reshape(n, -1), axis=1)
    s2 = np.sqrt(recon_sq)
    s6 = refined.reshape(n, -1).std(axis=1)

    bank = ctx.bank
    d2 = (
        np.sum(latents**2, axis=1)[:, None]
        + np.sum(bank**2, axis=1)[None, :]
        - 2.0 * latents @ bank.T
    )
    d2 = np.maximum(d2, 0.0)
    k = min(ctx.knn_k, bank.shape[0])
    part = np.partition(d2, k - 1, axis=1)[:, :k]
    s3 = np.sqrt(part).mean(axis=1)

    s4 = np.zeros(n)
    missing = 0
    for row, anchor in enumerate(anchors):
        z_lag = latent_by_anchor.get(anchor - lag)
        if z_lag is None:
            missing += 1
            continue
        s4[row] = np.linalg.norm((latents[row] - z_lag) - ctx.mu_lag_delta)

    centered = latents - ctx.mu_z
    s5 = np.einsum("ij,jk,ik->i", centered, ctx.precision_z, centered)

    return np.column_stack([s1, s2, s3, s4, s5, s6]), missing


def run_detection(panel: Panel, cfg: PipelineConfig, seed: int) -> PipelineResult:
    """Execute the full three-stage procedure on one panel."""
    cfg.validate()
    t = panel.n_steps
    length, horizon = cfg.window_length, cfg.horizon
    timings: Dict[str, float] = {}
    seeds = np.random.SeedSequence(seed).generate_state(4)

    splits = split_indices(t, length, horizon, cfg.train_rows, cfg.calibration_rows)
    norm = fit_norm(panel.data, splits.train_rows)
    normalized = apply_norm(panel.data, norm)
    windows = build_windows(normalized, length, horizon)
    pos_of = {w.index: i for i, w in enumerate(windows)}
    backbone_cfg = cfg.build_backbone(panel.n_features)

    # Stage I: reconstruction-based purification of the training windows.
    tic = time.perf_counter()
    train_windows = [windows[pos_of[a]] for a in splits.train]
    retained_positions, purify_report = purify(
        train_windows, backbone_cfg, cfg.purify, seed=int(seeds[0])
    )
    timings["purify"] = time.perf_counter() - tic

    # Stage II: full model on the purified set.
    tic = time.perf_counter()
    state = init_state(backbone_cfg, seed=int(seeds[1]))
    train_backbone(state, [train_windows[i] for i in retained_positions], seed=int(seeds[2]))
    timings["train"] = time.perf_counter() - tic

    # Model outputs for the purified training windows (latent baseline) and
    # for every window from the earliest lag predecessor of the calibration
    # split through the last test window. Fitting the latent baseline on the
    # purified training latents keeps calibration and test windows equally
    # out-of-sample, so the calibrated cutoff transfers to the test split.
    tic = time.perf_counter()
    lag = cfg.scoring.latent_lag
    purified_anchors = sorted(train_windows[i].index for i in retained_positions)
    first_needed = max(int(splits.calibration[0]) - lag, length - 1)
    scored_range = set(range(first_needed, int(splits.test[-1]) + 1))
    eval_anchors = sorted(scored_range | set(purified_anchors) | {a - lag for a in purified_anchors if a - lag >= length - 1})
    eval_positions = [pos_of[a] for a in eval_anchors]
    outputs = evaluate_windows(state, [windows[i] for i in eval_positions])
    latent_by_anchor = {a: outputs["latent"][i] for i, a in enumerate(eval_anchors)}
    local_pos = {a: i for i, a in enumerate(eval_anchors)}

    baseline_latents = np.stack([latent_by_anchor[a] for a in purified_anchors])
    lag_deltas = [
        latent_by_anchor[a] - latent_by_anchor[a - lag]
        for a in purified_anchors
        if (a - lag) in latent_by_anchor
    ]
    ctx = build_context(
        baseline_latents,
        np.stack(lag_deltas) if lag_deltas else None,
        ridge=cfg.scoring.ridge,
        knn_k=cfg.scoring.knn_k,
    )

    cal_anchors = [int(a) for a in splits.calibration]
    cal_components, _ = _component_matrix(
        outputs,
        [local_pos[a] for a in cal_anchors],
        cal_anchors,
        latent_by_anchor,
        ctx,
        lag,
    )
    calibration = fit_calibration(
        cal_components,
        ctx,
        cfg.scoring.weights,
        cfg.decision.alpha,
        ewma_span=cfg.scoring.ewma_span,
        epsilon=cfg.scoring.epsilon,
    )
    timings["calibrate"] = time.perf_counter() - tic

    # Stage III: score the test split, decide, attribute.
    tic = time.perf_counter()
    test_anchors = [int(a) for a in splits.test]
    test_components, lag_missing = _component_matrix(
        outputs,
        [local_pos[a] for a in test_anchors],
        test_anchors,
        latent_by_anchor,
        ctx,
        lag,
    )
    standardized, aggregate = standardize_and_aggregate(test_components, calibration)
    smoothed = ewma(aggregate, cfg.scoring.ewma_span)
    detection = decide(smoothed, cfg.decision, calibration.tau)
    timings["score"] = time.perf_counter() - tic

    tic = time.perf_counter()
    baseline = fit_baseline(panel.data[cfg.train_rows : cfg.calibration_rows])
    attributions: List[AttributionReport] = []
    if cfg.run_attribution:
        for i, anchor in enumerate(test_anchors):
            if detection.labels[i] != 1:
                continue
            attributions.append(
                attribute_window(
                    state,
                    panel.data[anchor - length + 1 : anchor + 1],
                    normalized[anchor - length + 1 : anchor + 1],
                    baseline,
                    calibration.context.mu_z,
                    cumulative_mass=cfg.attribution_mass,
                    window_index=anchor,
                    factor_names=panel.feature_names,
                )
            )
    timings["attribution"] = time.perf_counter() - tic

    return PipelineResult(
        splits=splits,
        norm=norm,
        state=state,
        purify_report=purify_report,
        calibration=calibration,
        calibration_hash=calibration.content_hash(),
        cal_components=cal_components,
        test_components=test_components,
        test_standardized=standardized,
        test_aggregate=aggregate,
        test_smoothed=smoothed,
        detection=detection,
        attribution_baseline=baseline,
        attributions=attributions,
        lag_missing=lag_missing,
        timings=timings,
    )


def rescore_with_weights(
    result: PipelineResult,
    weights: Sequence[float],
    decision_cfg: DecisionConfig,
) -> Tuple[np.ndarray, DetectionResult]:
    """Re-aggregate an existing run under different component weights.

    Refits medians/IQRs/cutoff on the stored calibration components (same
    latent context and frozen model), then re-decides the test split; used
    for component-ablation comparisons on identical seeds.
    """
    stats = fit_calibration(
        result.cal_components,
        result.calibration.context,
        weights,
        decision_cfg.alpha,
        ewma_span=result.calibration.ewma_span,
        epsilon=result.calibration.epsilon,
    )
    _, aggregate = standardize_and_aggregate(result.test_components, stats)
    smoothed = ewma(aggregate, stats.ewma_span)
    return smoothed, decide(smoothed, decision_cfg, stats.tau)


def truth_for_anchors(
    time_mask: np.ndarray, anchors: Sequence[int], window_length: int
) -> np.ndarray:
    from .evaluation import window_truth_labels

    return window_truth_labels(time_mask, anchors, window_length)

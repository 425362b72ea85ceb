"""Machine-readable ledger of pinned design decisions.

Each entry names the convention, why it is pinned, and the code object that
embodies it; ``verify_decision_refs`` resolves every reference so the docs
cannot drift from the implementation. Rendered into docs/design_notes.md.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass
from typing import List, Tuple


@dataclass(frozen=True)
class Decision:
    id: str
    module: str
    decision: str
    rationale: str
    code_ref: str  # "package.module:attribute"


DECISIONS: Tuple[Decision, ...] = (
    Decision(
        "D01", "autodiff",
        "All numeric kernels run in 64-bit floats.",
        "Calibration quantiles are sensitive to rounding; the problem sizes do not need mixed precision.",
        "regen_tad.autodiff:_as_array",
    ),
    Decision(
        "D02", "nn_ops",
        "Temporal convolution uses same-length symmetric zero padding with odd widths.",
        "Keeps the feature sequence aligned with the input window; scoring already sees only past windows.",
        "regen_tad.nn_ops:conv1d",
    ),
    Decision(
        "D03", "backbone",
        "The encoder block applies layer normalization before attention and before the feed-forward stage.",
        "Pre-normalization stabilizes small-scale training.",
        "regen_tad.backbone:encode",
    ),
    Decision(
        "D04", "nn_ops",
        "Dropout is train-time-only Bernoulli masking with inverted scaling.",
        "Inference stays deterministic and unscaled.",
        "regen_tad.nn_ops:dropout",
    ),
    Decision(
        "D05", "autodiff",
        "Softmax subtracts the row maximum before exponentiation.",
        "Numerical stability; the subtraction leaves values and gradients unchanged.",
        "regen_tad.autodiff:softmax",
    ),
    Decision(
        "D06", "backbone",
        "Convolutional and feed-forward activations are ReLU.",
        "Unpinned elsewhere; one nonlinearity keeps gradient checks simple.",
        "regen_tad.autodiff:relu",
    ),
    Decision(
        "D07", "windowing",
        "Input normalization is per-feature z-scoring with training-row statistics, scale floored at 1e-8.",
        "Training-only statistics keep the protocol leakage-free; the floor guards constant features.",
        "regen_tad.windowing:SIGMA_FLOOR",
    ),
    Decision(
        "D08", "windowing",
        "Indexing is 0-based; outputs carry original panel row indices (window anchors).",
        "Avoids off-by-one drift between reports and the panel file.",
        "regen_tad.windowing:build_windows",
    ),
    Decision(
        "D09", "backbone",
        "Attention and recurrent branches are mean-pooled over time; one encoder block.",
        "Mean pooling preserves scale across window lengths; one block keeps training budgets small.",
        "regen_tad.backbone:encode",
    ),
    Decision(
        "D10", "backbone",
        "The refinement network receives the vectorized first-pass residual concatenated with the latent, and adds a one-hidden-layer ReLU correction to the first forecast.",
        "Windows are scored once their future block is observable, so the realized residual is always available.",
        "regen_tad.backbone:forward",
    ),
    Decision(
        "D11", "backbone",
        "Reconstruction and forecast heads are single linear maps from the latent.",
        "Keeps the latent the sole information bottleneck, which the latent-side diagnostics exploit.",
        "regen_tad.backbone:init_state",
    ),
    Decision(
        "D12", "backbone",
        "Weights use fan-scaled uniform init; the LSTM forget-gate bias starts at 1.",
        "Standard initialization that trains reliably at these scales.",
        "regen_tad.backbone:init_state",
    ),
    Decision(
        "D13", "backbone",
        "Default embedding width is 126: the closest width to 128 divisible by six heads.",
        "Six heads cannot split 128 evenly; per-head width must be integral.",
        "regen_tad.backbone:DEFAULT_EMBED_DIM",
    ),
    Decision(
        "D14", "backbone",
        "Default training budget is 30 epochs with batch size 32 and Adam at 1e-3.",
        "Exposed in config; desk-scale recipes override downward.",
        "regen_tad.backbone:BackboneConfig",
    ),
    Decision(
        "D15", "purify",
        "Quantiles everywhere use linear interpolation between order statistics (numpy default).",
        "One pinned convention makes thresholds bit-reproducible.",
        "regen_tad.scoring:fit_calibration",
    ),
    Decision(
        "D16", "purify",
        "Each trimming round retrains the reconstruction model from fresh initialization.",
        "A heavily contaminated first fit must not anchor later rounds.",
        "regen_tad.purify:purify",
    ),
    Decision(
        "D17", "purify",
        "The trimming knob is named trim_quantile, separate from the decision-stage anomaly fraction.",
        "The two tail parameters are different knobs and must not be conflated.",
        "regen_tad.purify:PurifyConfig",
    ),
    Decision(
        "D18", "scoring",
        "Forecast and reconstruction diagnostics use unsquared Frobenius norms.",
        "Moderates tail leverage ahead of robust standardization.",
        "regen_tad.scoring:compute_components",
    ),
    Decision(
        "D19", "scoring",
        "The latent-dynamics diagnostic is the norm of the lagged latent difference centered by the baseline mean difference (lag 5).",
        "A concrete pinned form for an otherwise underdetermined component.",
        "regen_tad.scoring:compute_components",
    ),
    Decision(
        "D20", "scoring",
        "Residual dispersion is the entrywise population standard deviation of the refined residual matrix.",
        "Most direct reading of dispersion over the forecast block.",
        "regen_tad.scoring:compute_components",
    ),
    Decision(
        "D21", "scoring",
        "The latent-density diagnostic is the mean Euclidean distance to the k nearest bank entries, exact brute force, k clamped to the bank.",
        "Banks are small at desk scale; the mean of k distances is smoother than the k-th.",
        "regen_tad.scoring:knn_mean_distance",
    ),
    Decision(
        "D22", "scoring",
        "Component weights default to all ones and must sum to the component count.",
        "Data-driven weighting is out of scope; the sum constraint normalizes scale.",
        "regen_tad.scoring:ScoringConfig",
    ),
    Decision(
        "D23", "pipeline",
        "The latent baseline (center, shrinkage precision, kNN bank, lag-difference mean) is fitted on the purified training latents, not calibration latents.",
        "Calibration and test windows are then equally out-of-sample, so the calibrated cutoff transfers; fitting the baseline on calibration latents makes calibration scores in-sample and inflates test false alarms to near one (measured).",
        "regen_tad.pipeline:run_detection",
    ),
    Decision(
        "D24", "scoring",
        "The decision cutoff is the (1-alpha) quantile of the EWMA-smoothed calibration aggregate.",
        "Test scores are smoothed, so the cutoff must be set on the same transform to be exchangeable under the null.",
        "regen_tad.scoring:fit_calibration",
    ),
    Decision(
        "D25", "scoring",
        "The latent distance diagnostic is the squared Mahalanobis form.",
        "Robust standardization and rank decisions absorb monotone transforms.",
        "regen_tad.scoring:compute_components",
    ),
    Decision(
        "D26", "decision",
        "Default decision mode is rank; threshold mode compares strictly above the cutoff.",
        "Rank selection pins the flagged share exactly; strictness is pinned once for reproducibility.",
        "regen_tad.decision:DecisionConfig",
    ),
    Decision(
        "D27", "decision",
        "Rank ties at the cutoff break toward earlier indices.",
        "Deterministic and declared.",
        "regen_tad.decision:rank_decision",
    ),
    Decision(
        "D28", "decision",
        "The rank count ceil(alpha*N) is computed with a 1e-9 tolerance.",
        "Float representation of alpha*N can land epsilon above an integer (0.07*100).",
        "regen_tad.decision:flag_count",
    ),
    Decision(
        "D29", "attribution",
        "Baseline deviations use raw panel units with calibration-row location/scale; sensitivities differentiate the normalized input path.",
        "The product mixes an economic displacement with a model sensitivity by design; rescaling sensitivities per factor would reorder rankings.",
        "regen_tad.attribution:fit_baseline",
    ),
    Decision(
        "D30", "attribution",
        "Default cumulative-mass target for the selected subset is 0.8.",
        "Exposed in config.",
        "regen_tad.attribution:DEFAULT_CUMULATIVE_MASS",
    ),
    Decision(
        "D31", "evaluation",
        "A window is anomaly-positive iff its input span intersects the anomalous time mask.",
        "Most inclusive consistent window-level rule; pinned for all metrics.",
        "regen_tad.evaluation:window_truth_labels",
    ),
    Decision(
        "D32", "harness",
        "Desk-scale experiment defaults: 20 features, 500 steps, 10 replications per cell.",
        "Documented scaling of the full-size designs.",
        "regen_tad.harness:ExperimentSpec",
    ),
    Decision(
        "D33", "artifacts",
        "Wall-clock timings are written only to timings.csv; all other artifacts are byte-deterministic.",
        "Rerun byte-identity is part of the contract; timing is not reproducible.",
        "regen_tad.artifacts:write_timings",
    ),
    Decision(
        "D34", "datagen",
        "Structural injection magnitudes scale with the per-column sample standard deviation of the clean baseline.",
        "A concrete estimator must be pinned for reproducible magnitudes.",
        "regen_tad.datagen:_column_stats",
    ),
    Decision(
        "D35", "datagen",
        "Early placement starts at ceil(0.1T); late placement ends at floor(0.9T)-1 (0-based); explicit ranges are supported.",
        "Pinned boundaries for the two named placements.",
        "regen_tad.datagen:_segment_bounds",
    ),
    Decision(
        "D36", "datagen",
        "Affected features are the first ceil(fraction*p) indices of a seeded permutation; point anomalies affect a single midpoint instant.",
        "Reproducible ground truth.",
        "regen_tad.datagen:_affected_features",
    ),
    Decision(
        "D37", "datagen",
        "GARCH(1,1) defaults: omega=1e-5, alpha=0.08, beta=0.90; factor baselines use 3 factors, loadings N(0,0.5^2), idiosyncratic scale 0.01.",
        "Equity-like persistence and dispersion; parameters otherwise unpinned.",
        "regen_tad.datagen:GARCH_OMEGA",
    ),
    Decision(
        "D38", "harness",
        "The 'tail' placement pins the anomalous segment to end at the last evaluable window anchor.",
        "Exponential smoothing lags past a segment; windows after it would register the decay as false alarms even though their input spans are clean.",
        "regen_tad.harness:resolve_placement",
    ),
    Decision(
        "D39", "artifacts",
        "Floating-point CSV cells are serialized with 17 significant digits.",
        "Bit-exact round-trips.",
        "regen_tad.artifacts:fmt",
    ),
    Decision(
        "D40", "scoring",
        "EWMA smoothing is the standard recursion seeded at the first observation with alpha = 2/(span+1).",
        "Span five by default; the seed choice is pinned for reproducibility.",
        "regen_tad.scoring:ewma",
    ),
    Decision(
        "D41", "datagen",
        "Structural mechanisms other than the collective one affect all features; market-wide stress mechanisms affect half the features unless stated otherwise.",
        "Affected fractions are unpinned except where explicit; these defaults keep mechanism identities distinct.",
        "regen_tad.datagen:DIRECTIONAL_FRACTION",
    ),
    Decision(
        "D42", "scoring",
        "The shrinkage covariance anchors on the n-1 sample covariance with the analytic intensity computed from 1/n moments, clamped to [0,1].",
        "Matches the reference analytic estimator (verified against scikit-learn) while keeping the pinned n-1 display convention.",
        "regen_tad.scoring:ledoit_wolf_shrink",
    ),
)


def verify_decision_refs() -> List[str]:
    """Resolve every code reference; returns the list of failures (empty = ok)."""
    failures = []
    for d in DECISIONS:
        module_name, _, attr = d.code_ref.partition(":")
        try:
            module = importlib.import_module(module_name)
        except ImportError as exc:
            failures.append(f"{d.id}: cannot import {module_name}: {exc}")
            continue
        if not attr or not hasattr(module, attr):
            failures.append(f"{d.id}: {module_name} has no attribute '{attr}'")
    return failures


def render_markdown() -> str:
    lines = ["# Pinned design decisions", ""]
    for d in DECISIONS:
        lines.append(f"## {d.id} ({d.module})")
        lines.append("")
        lines.append(d.decision)
        lines.append("")
        lines.append(f"*Why:* {d.rationale}")
        lines.append("")
        lines.append(f"*Code:* `{d.code_ref}`")
        lines.append("")
    return "\n".join(lines)

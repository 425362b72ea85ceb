"""Artifact serialization: run outputs, manifests, and saved calibration.

All floating-point CSV cells use 17 significant digits so values round-trip
bit-exactly. Wall-clock timings are written only to ``timings.csv``; every
other artifact is byte-deterministic for a fixed seed and config.
"""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Dict, Optional, Sequence

import numpy as np

from . import __version__
from .attribution import AttributionBaseline
from .pipeline import PipelineResult
from .scoring import CalibrationStats, DiagnosticContext
from .windowing import NormStats

SCORE_COLUMNS = (
    ["index"]
    + [f"s{m}" for m in range(1, 7)]
    + [f"s{m}_std" for m in range(1, 7)]
    + ["S_raw", "S_smoothed"]
)


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Sequence[Dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c, "")) for c in columns])


def write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_scores_csv(path: str, result: PipelineResult) -> None:
    rows = []
    for i, anchor in enumerate(result.test_anchors):
        row = {"index": int(anchor)}
        for m in range(6):
            row[f"s{m + 1}"] = result.test_components[i, m]
            row[f"s{m + 1}_std"] = result.test_standardized[i, m]
        row["S_raw"] = result.test_aggregate[i]
        row["S_smoothed"] = result.test_smoothed[i]
        rows.append(row)
    write_csv(path, SCORE_COLUMNS, rows)


def write_detections(path_csv: str, path_json: str, result: PipelineResult, config_echo: Dict) -> None:
    rows = [
        {
            "index": int(anchor),
            "score": result.test_smoothed[i],
            "label": int(result.detection.labels[i]),
        }
        for i, anchor in enumerate(result.test_anchors)
    ]
    write_csv(path_csv, ["index", "score", "label"], rows)
    summary = result.detection.summary()
    summary["config"] = config_echo
    write_json(path_json, summary)


def write_attributions(path: str, result: PipelineResult) -> None:
    write_json(path, [report.to_dict() for report in result.attributions])


def write_manifest(
    path: str,
    command: str,
    config_values: Dict,
    seed: int,
    artifacts: Sequence[str],
    extra: Optional[Dict] = None,
    status: str = "complete",
) -> None:
    payload = {
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config_values,
        "artifacts": sorted(artifacts),
        "status": status,
    }
    if extra:
        payload.update(extra)
    write_json(path, payload)


def write_timings(path: str, rows: Sequence[Dict]) -> None:
    # Non-deterministic by nature; kept out of the reproducibility contract.
    columns = sorted({k for row in rows for k in row})
    write_csv(path, columns, rows)


# -- persisted calibration (for re-running attribution) ---------------------------

def save_run_state(path: str, result: PipelineResult, train_rows: int, calibration_rows: int) -> None:
    stats = result.calibration
    np.savez(
        path,
        medians=stats.medians,
        iqrs=stats.iqrs,
        mu_z=stats.context.mu_z,
        precision_z=stats.context.precision_z,
        bank=stats.context.bank,
        mu_lag_delta=stats.context.mu_lag_delta,
        knn_k=np.array(stats.context.knn_k),
        weights=stats.weights,
        alpha=np.array(stats.alpha),
        tau=np.array(stats.tau),
        epsilon=np.array(stats.epsilon),
        ewma_span=np.array(stats.ewma_span),
        norm_mean=result.norm.mean,
        norm_std=result.norm.std,
        baseline_mu=result.attribution_baseline.mu,
        baseline_sigma=result.attribution_baseline.sigma,
        train_rows=np.array(train_rows),
        calibration_rows=np.array(calibration_rows),
        calibration_hash=np.array(result.calibration_hash),
    )


def load_run_state(path: str):
    blob = np.load(path, allow_pickle=False)
    context = DiagnosticContext(
        mu_z=blob["mu_z"],
        precision_z=blob["precision_z"],
        bank=blob["bank"],
        mu_lag_delta=blob["mu_lag_delta"],
        knn_k=int(blob["knn_k"]),
    )
    stats = CalibrationStats(
        medians=blob["medians"],
        iqrs=blob["iqrs"],
        context=context,
        weights=blob["weights"],
        alpha=float(blob["alpha"]),
        tau=float(blob["tau"]),
        epsilon=float(blob["epsilon"]),
        ewma_span=int(blob["ewma_span"]),
    )
    norm = NormStats(mean=blob["norm_mean"], std=blob["norm_std"])
    baseline = AttributionBaseline(mu=blob["baseline_mu"], sigma=blob["baseline_sigma"])
    meta = {
        "train_rows": int(blob["train_rows"]),
        "calibration_rows": int(blob["calibration_rows"]),
        "calibration_hash": str(blob["calibration_hash"]),
    }
    return stats, norm, baseline, meta


def ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path

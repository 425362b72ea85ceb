"""Command-line surface: simulate panels, run detection, run benchmark
suites, and re-run attribution from saved artifacts.

Exit codes: 0 success, 2 configuration error, 3 data or split error,
4 numeric divergence, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Dict, List, Optional

from . import __version__
from .artifacts import (
    ensure_outdir,
    fmt,
    load_run_state,
    save_run_state,
    write_attributions,
    write_csv,
    write_detections,
    write_json,
    write_manifest,
    write_scores_csv,
    write_timings,
)
from .attribution import attribute_window
from .backbone import NumericDivergenceError, load_checkpoint, save_checkpoint
from .datagen import (
    GenerationError,
    PanelFormatError,
    load_panel_csv,
    simulate_scenario,
    write_panel_csv,
)
from .decision import DecisionError
from .harness import (
    RESULT_COLUMNS,
    ExperimentSpec,
    aggregate_records,
    attribution_recovery,
    clean_fpr_audit,
    horizon_sweep,
    overall_summary,
    run_experiment,
)
from .pipeline import run_detection
from .purify import PurifyConfigError
from .runconfig import ConfigError, RunConfig, load_config, validate_mechanisms
from .scoring import CalibrationError
from .windowing import SplitError, WindowError, apply_norm

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

STRUCTURAL_DEFAULTS = (
    "mean-shift",
    "trend-shift",
    "variance-shift",
    "spike",
    "collective",
    "contextual",
)
MARKET_DEFAULTS = (
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
CLEAN_DGPS = (
    "ar1-cross-cov",
    "iid-gaussian",
    "iid-student-t",
    "garch11",
    "static-factor",
    "factor-garch",
    "var1",
    "volatility-drift",
)


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("REGEN_TAD_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"REGEN_TAD_WORKERS must be an integer, got '{env}'") from exc
    return os.cpu_count() or 1


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.values["seed"] = args.seed
    if getattr(args, "mode", None):
        cfg.values["decision.mode"] = args.mode
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    scenario = cfg.build_scenario()
    panel, truth = simulate_scenario(scenario)

    out = ensure_outdir(args.out)
    panel_path = os.path.join(out, "panel.csv")
    truth_path = os.path.join(out, "truth.json")
    manifest_path = os.path.join(out, "manifest.json")
    write_panel_csv(panel, panel_path)
    write_json(
        truth_path,
        {
            "mechanism": truth.mechanism,
            "params": {k: v for k, v in truth.params.items()},
            "anomalous_rows": [int(i) for i in truth.affected_times],
            "affected_features": [int(j) for j in truth.affected_features],
            "gamma": scenario.gamma,
            "placement": scenario.placement,
        },
    )
    write_manifest(
        manifest_path,
        "simulate",
        cfg.to_manifest_dict(),
        cfg.seed,
        ["panel.csv", "truth.json"],
    )
    print(f"wrote panel {panel.n_steps}x{panel.n_features} to {panel_path}")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _load_run_config(args)
    pipeline_cfg = cfg.build_pipeline()
    panel = load_panel_csv(args.panel, sector_path=args.sectors)

    result = run_detection(panel, pipeline_cfg, seed=cfg.seed)

    out = ensure_outdir(args.out)
    paths = {
        "scores.csv": os.path.join(out, "scores.csv"),
        "detections.csv": os.path.join(out, "detections.csv"),
        "detections_summary.json": os.path.join(out, "detections_summary.json"),
        "attribution.json": os.path.join(out, "attribution.json"),
        "checkpoint.npz": os.path.join(out, "checkpoint.npz"),
        "calibration.npz": os.path.join(out, "calibration.npz"),
        "timings.csv": os.path.join(out, "timings.csv"),
        "manifest.json": os.path.join(out, "manifest.json"),
    }
    write_scores_csv(paths["scores.csv"], result)
    write_detections(
        paths["detections.csv"],
        paths["detections_summary.json"],
        result,
        cfg.to_manifest_dict(),
    )
    write_attributions(paths["attribution.json"], result)
    save_checkpoint(result.state, paths["checkpoint.npz"])
    save_run_state(
        paths["calibration.npz"], result, pipeline_cfg.train_rows, pipeline_cfg.calibration_rows
    )
    write_timings(paths["timings.csv"], [{"stage": k, "seconds": v} for k, v in result.timings.items()])
    write_manifest(
        paths["manifest.json"],
        "detect",
        cfg.to_manifest_dict(),
        cfg.seed,
        [name for name in paths if name != "manifest.json"],
        extra={
            "calibration_hash": result.calibration_hash,
            "purify": result.purify_report.to_dict(),
            "panel": os.path.abspath(args.panel),
        },
    )
    print(
        f"flagged {int(result.labels.sum())}/{result.labels.size} test windows; "
        f"cutoff {fmt(result.detection.cutoff)}; outputs in {out}"
    )
    return EXIT_OK


def _write_suite(out_dir: str, records: List[Dict], group_keys: List[str]) -> List[str]:
    ensure_outdir(out_dir)
    files = []
    det_columns = [c for c in RESULT_COLUMNS if c != "runtime_seconds"]
    write_csv(os.path.join(out_dir, "results.csv"), det_columns, records)
    files.append("results.csv")
    aggregates = aggregate_records(records, group_keys)
    agg_columns = group_keys + ["n_replications", "n_failed", "precision", "recall", "f1", "fpr", "auroc"]
    write_csv(os.path.join(out_dir, "summary.csv"), agg_columns, aggregates)
    files.append("summary.csv")
    overall = overall_summary(records)
    write_csv(
        os.path.join(out_dir, "overall.csv"),
        ["n_replications", "n_failed", "f1", "precision", "recall", "auroc", "fpr"],
        [overall],
    )
    files.append("overall.csv")
    write_timings(
        os.path.join(out_dir, "timings.csv"),
        [
            {
                "mechanism": r.get("mechanism"),
                "gamma": r.get("gamma"),
                "horizon": r.get("horizon"),
                "replication": r.get("replication"),
                "runtime_seconds": r.get("runtime_seconds", float("nan")),
            }
            for r in records
        ],
    )
    files.append("timings.csv")
    return files


def cmd_benchmark(args) -> int:
    cfg = _load_run_config(args)
    pipeline_cfg = cfg.build_pipeline()
    workers = _resolve_workers(args)
    suites = cfg.experiment_suites()
    out = ensure_outdir(args.out)
    manifest_path = os.path.join(out, "manifest.json")
    completed: List[str] = []
    write_manifest(
        manifest_path, "benchmark", cfg.to_manifest_dict(), cfg.seed, completed, status="incomplete"
    )

    for suite in suites:
        suite_dir = os.path.join(out, suite)
        if suite in ("structural", "market"):
            defaults = STRUCTURAL_DEFAULTS if suite == "structural" else MARKET_DEFAULTS
            grid = cfg.experiment_grid(defaults)
            validate_mechanisms(grid["mechanisms"])
            dgp = str(cfg.get("scenario.dgp", "static-factor" if suite == "market" else "ar1-cross-cov"))
            spec = ExperimentSpec(
                dgp=dgp,
                mechanisms=grid["mechanisms"],
                gammas=grid["gammas"],
                placements=grid["placements"],
                n_steps=int(cfg.get("scenario.t", 500)),
                n_features=int(cfg.get("scenario.p", 20)),
                replications=grid["replications"],
                master_seed=cfg.seed,
                pipeline=pipeline_cfg,
                suite=suite,
            )
            records = run_experiment(spec, workers=workers)
            _write_suite(suite_dir, records, ["mechanism", "gamma"])
        elif suite == "horizon":
            grid = cfg.experiment_grid(STRUCTURAL_DEFAULTS)
            spec = ExperimentSpec(
                dgp=str(cfg.get("scenario.dgp", "ar1-cross-cov")),
                mechanisms=tuple(cfg.get("experiment.mechanisms", ["mean-shift"])),
                gammas=grid["gammas"],
                placements=grid["placements"],
                n_steps=int(cfg.get("scenario.t", 500)),
                n_features=int(cfg.get("scenario.p", 20)),
                replications=grid["replications"],
                master_seed=cfg.seed,
                pipeline=pipeline_cfg,
                suite="horizon",
            )
            records = horizon_sweep(spec, grid["horizons"], workers=workers)
            _write_suite(suite_dir, records, ["mechanism", "horizon"])
        elif suite == "clean-fpr":
            grid = cfg.experiment_grid(STRUCTURAL_DEFAULTS)
            dgps = grid["dgps"]
            records, table = clean_fpr_audit(
                dgps,
                pipeline_cfg,
                replications=grid["replications"],
                n_steps=int(cfg.get("scenario.t", 500)),
                n_features=int(cfg.get("scenario.p", 20)),
                master_seed=cfg.seed,
                workers=workers,
            )
            ensure_outdir(suite_dir)
            det_columns = [c for c in RESULT_COLUMNS if c != "runtime_seconds"]
            write_csv(os.path.join(suite_dir, "results.csv"), det_columns, records)
            write_csv(
                os.path.join(suite_dir, "fpr_by_dgp.csv"),
                ["dgp", "n_replications", "fpr"],
                table,
            )
            write_timings(
                os.path.join(suite_dir, "timings.csv"),
                [
                    {"dgp": r.get("dgp"), "replication": r.get("replication"),
                     "runtime_seconds": r.get("runtime_seconds", float("nan"))}
                    for r in records
                ],
            )
        elif suite == "attribution":
            grid = cfg.experiment_grid(STRUCTURAL_DEFAULTS)
            rows: List[Dict] = []
            for mechanism in ("collective", "spike"):
                rows.extend(
                    attribution_recovery(
                        pipeline_cfg,
                        mechanism,
                        n_seeds=grid["attribution_seeds"],
                        n_steps=int(cfg.get("scenario.t", 500)),
                        n_features=int(cfg.get("scenario.p", 20)),
                        subset_fraction=grid["subset_fraction"],
                        dgp=str(cfg.get("scenario.dgp", "ar1-cross-cov")),
                        master_seed=cfg.seed,
                    )
                )
            ensure_outdir(suite_dir)
            write_csv(
                os.path.join(suite_dir, "match_ratios.csv"),
                ["mechanism", "replication", "subset_size", "flagged", "attributed", "avg_match_ratio"],
                rows,
            )
        completed.append(suite)
        write_manifest(
            manifest_path, "benchmark", cfg.to_manifest_dict(), cfg.seed, completed, status="incomplete"
        )

    write_manifest(
        manifest_path, "benchmark", cfg.to_manifest_dict(), cfg.seed, completed, status="complete"
    )
    print(f"benchmark suites {', '.join(completed)} written to {out}")
    return EXIT_OK


def cmd_attribute(args) -> int:
    cfg = _load_run_config(args)
    pipeline_cfg = cfg.build_pipeline()
    run_dir = args.run
    state = load_checkpoint(os.path.join(run_dir, "checkpoint.npz"))
    stats, norm, baseline, meta = load_run_state(os.path.join(run_dir, "calibration.npz"))
    panel = load_panel_csv(args.panel, sector_path=args.sectors)
    normalized = apply_norm(panel.data, norm)

    import csv as _csv

    flagged: List[int] = []
    with open(os.path.join(run_dir, "detections.csv"), newline="") as fh:
        for row in _csv.DictReader(fh):
            if int(row["label"]) == 1:
                flagged.append(int(row["index"]))

    length = state.cfg.window_length
    reports = []
    for anchor in flagged:
        reports.append(
            attribute_window(
                state,
                panel.data[anchor - length + 1 : anchor + 1],
                normalized[anchor - length + 1 : anchor + 1],
                baseline,
                stats.context.mu_z,
                cumulative_mass=pipeline_cfg.attribution_mass,
                window_index=anchor,
                factor_names=panel.feature_names,
            )
        )
    out = ensure_outdir(args.out)
    write_json(os.path.join(out, "attribution.json"), [r.to_dict() for r in reports])
    write_manifest(
        os.path.join(out, "manifest.json"),
        "attribute",
        cfg.to_manifest_dict(),
        cfg.seed,
        ["attribution.json"],
        extra={"calibration_hash": meta["calibration_hash"], "run_dir": os.path.abspath(run_dir)},
    )
    print(f"attributed {len(reports)} flagged windows; outputs in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regen-tad",
        description="Generative ensemble anomaly detection for multivariate return panels",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="flat key=value config document")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel workers (default: cores, or REGEN_TAD_WORKERS)")

    p_sim = sub.add_parser("simulate", help="generate a synthetic panel with ground truth")
    common(p_sim)
    p_sim.set_defaults(handler=cmd_simulate)

    p_det = sub.add_parser("detect", help="run the full detection pipeline on a panel CSV")
    common(p_det)
    p_det.add_argument("--panel", required=True, help="panel CSV (rows = time, cols = features)")
    p_det.add_argument("--sectors", default=None, help="optional feature,sector sidecar CSV")
    p_det.add_argument("--mode", choices=["rank", "threshold"], default=None,
                       help="override decision.mode")
    p_det.set_defaults(handler=cmd_detect)

    p_bench = sub.add_parser("benchmark", help="run Monte Carlo benchmark suites")
    common(p_bench)
    p_bench.set_defaults(handler=cmd_benchmark)

    p_attr = sub.add_parser("attribute", help="re-run attribution from a saved detect run")
    common(p_attr)
    p_attr.add_argument("--panel", required=True, help="panel CSV used for the detect run")
    p_attr.add_argument("--sectors", default=None)
    p_attr.add_argument("--run", required=True, help="directory of the detect run")
    p_attr.set_defaults(handler=cmd_attribute)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PurifyConfigError, DecisionError, CalibrationError, GenerationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PanelFormatError, SplitError, WindowError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericDivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

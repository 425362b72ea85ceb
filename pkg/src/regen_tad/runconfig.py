"""Flat dotted-key run configuration.

One human-readable document per run: ``key = value`` lines, ``#`` comments.
Values are JSON scalars or comma-separated lists. Every key must appear in
the schema below; unknown keys are rejected before any compute starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

from .datagen import BASELINE_DGPS, MARKET_MECHANISMS, STRUCTURAL_MECHANISMS, ScenarioConfig
from .decision import DecisionConfig
from .pipeline import PipelineConfig
from .purify import PurifyConfig
from .scoring import ScoringConfig


class ConfigError(ValueError):
    pass


def _as_int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"expected integer, got {v!r}")
    return int(v)


def _as_float(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected number, got {v!r}")
    return float(v)


def _as_str(v) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"expected string, got {v!r}")
    return v


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    raise ConfigError(f"expected true/false, got {v!r}")


def _as_float_list(v) -> List[float]:
    items = v if isinstance(v, list) else [v]
    return [_as_float(x) for x in items]


def _as_int_list(v) -> List[int]:
    items = v if isinstance(v, list) else [v]
    return [_as_int(x) for x in items]


def _as_str_list(v) -> List[str]:
    items = v if isinstance(v, list) else [v]
    return [_as_str(x) for x in items]


# key -> coercion function. The parsed document is stored flat and typed on
# access; defaults live in the dataclasses the accessors build.
SCHEMA: Dict[str, Callable] = {
    "seed": _as_int,
    "scenario.dgp": _as_str,
    "scenario.t": _as_int,
    "scenario.p": _as_int,
    "scenario.mechanism": _as_str,
    "scenario.gamma": _as_float,
    "scenario.placement": _as_str,
    "scenario.range_start": _as_int,
    "scenario.range_end": _as_int,
    "scenario.features": _as_int_list,
    "scenario.sector": _as_str,
    "pipeline.window_length": _as_int,
    "pipeline.horizon": _as_int,
    "pipeline.train_rows": _as_int,
    "pipeline.calibration_rows": _as_int,
    "backbone.conv_layers": _as_int,
    "backbone.conv_filters": _as_int,
    "backbone.conv_width": _as_int,
    "backbone.embed_dim": _as_int,
    "backbone.n_heads": _as_int,
    "backbone.ff_width": _as_int,
    "backbone.dropout": _as_float,
    "backbone.lstm_hidden": _as_int,
    "backbone.latent_dim": _as_int,
    "backbone.refine_hidden": _as_int,
    "backbone.learning_rate": _as_float,
    "backbone.epochs": _as_int,
    "backbone.batch_size": _as_int,
    "backbone.loss_w1": _as_float,
    "backbone.loss_w2": _as_float,
    "backbone.loss_wr": _as_float,
    "backbone.latent_penalty": _as_float,
    "purify.trim_quantile": _as_float,
    "purify.max_removal": _as_float,
    "purify.max_iterations": _as_int,
    "purify.epochs": _as_int,
    "scoring.knn_k": _as_int,
    "scoring.latent_lag": _as_int,
    "scoring.ewma_span": _as_int,
    "scoring.epsilon": _as_float,
    "scoring.ridge": _as_float,
    "scoring.weights": _as_float_list,
    "decision.mode": _as_str,
    "decision.alpha": _as_float,
    "decision.min_run": _as_int,
    "decision.dilation_radius": _as_int,
    "attribution.mass": _as_float,
    "attribution.enabled": _as_bool,
    "experiment.suites": _as_str_list,
    "experiment.mechanisms": _as_str_list,
    "experiment.gammas": _as_float_list,
    "experiment.placements": _as_str_list,
    "experiment.dgps": _as_str_list,
    "experiment.replications": _as_int,
    "experiment.horizons": _as_int_list,
    "experiment.attribution_seeds": _as_int,
    "experiment.subset_fraction": _as_float,
}

BACKBONE_KEYS = (
    "conv_layers",
    "conv_filters",
    "conv_width",
    "embed_dim",
    "n_heads",
    "ff_width",
    "dropout",
    "lstm_hidden",
    "latent_dim",
    "refine_hidden",
    "learning_rate",
    "epochs",
    "batch_size",
    "latent_penalty",
)

KNOWN_SUITES = ("structural", "market", "horizon", "clean-fpr", "attribution")


def _parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    if "," in raw:
        return [_parse_value(item) for item in raw.split(",")]
    return raw


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse and type-check a config document; reject unknown keys."""
    values: Dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got '{stripped}'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {line_no}: unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate config key '{key}'")
        try:
            values[key] = SCHEMA[key](_parse_value(raw))
        except ConfigError as exc:
            raise ConfigError(f"line {line_no}: key '{key}': {exc}") from exc
    return values


def load_config(path: str) -> "RunConfig":
    with open(path) as fh:
        return RunConfig(parse_config_text(fh.read()))


@dataclass
class RunConfig:
    values: Dict[str, object] = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.values.get("seed", 0))

    # -- builders ------------------------------------------------------------
    def build_scenario(self) -> ScenarioConfig:
        dgp = str(self.get("scenario.dgp", "iid-gaussian"))
        mechanism = self.get("scenario.mechanism")
        if mechanism in ("none", "null"):
            mechanism = None
        placement = str(self.get("scenario.placement", "late"))
        explicit = None
        if placement == "explicit" or (
            self.get("scenario.range_start") is not None
            and self.get("scenario.range_end") is not None
        ):
            start = self.get("scenario.range_start")
            end = self.get("scenario.range_end")
            if start is None or end is None:
                raise ConfigError(
                    "explicit placement needs scenario.range_start and scenario.range_end"
                )
            placement = "explicit"
            explicit = (int(start), int(end))
        cfg = ScenarioConfig(
            dgp=dgp,
            n_steps=int(self.get("scenario.t", 500)),
            n_features=int(self.get("scenario.p", 20)),
            mechanism=str(mechanism) if mechanism is not None else None,
            gamma=float(self.get("scenario.gamma", 0.0)),
            placement=placement,
            explicit_range=explicit,
            features=self.get("scenario.features"),
            sector=self.get("scenario.sector"),
            seed=self.seed,
        )
        cfg.validate()
        return cfg

    def build_pipeline(self) -> PipelineConfig:
        backbone = {}
        for name in BACKBONE_KEYS:
            value = self.get(f"backbone.{name}")
            if value is not None:
                backbone[name] = value
        w1 = self.get("backbone.loss_w1")
        w2 = self.get("backbone.loss_w2")
        wr = self.get("backbone.loss_wr")
        if any(v is not None for v in (w1, w2, wr)):
            defaults = (0.2, 0.8, 0.5)
            backbone["loss_weights"] = tuple(
                float(v) if v is not None else d for v, d in zip((w1, w2, wr), defaults)
            )

        purify_kwargs = {
            name: self.values[f"purify.{name}"]
            for name in ("trim_quantile", "max_removal", "max_iterations", "epochs")
            if f"purify.{name}" in self.values
        }
        scoring_kwargs = {
            name: self.values[f"scoring.{name}"]
            for name in ("knn_k", "latent_lag", "ewma_span", "epsilon", "ridge")
            if f"scoring.{name}" in self.values
        }
        if "scoring.weights" in self.values:
            scoring_kwargs["weights"] = tuple(self.values["scoring.weights"])  # type: ignore[arg-type]
        decision_kwargs = {
            name: self.values[f"decision.{name}"]
            for name in ("mode", "alpha", "min_run", "dilation_radius")
            if f"decision.{name}" in self.values
        }
        cfg = PipelineConfig(
            window_length=int(self.get("pipeline.window_length", 36)),
            horizon=int(self.get("pipeline.horizon", 5)),
            train_rows=int(self.get("pipeline.train_rows", 300)),
            calibration_rows=int(self.get("pipeline.calibration_rows", 400)),
            backbone=backbone,
            purify=PurifyConfig(**purify_kwargs),
            scoring=ScoringConfig(**scoring_kwargs),
            decision=DecisionConfig(**decision_kwargs),
            attribution_mass=float(self.get("attribution.mass", 0.8)),
            run_attribution=bool(self.get("attribution.enabled", True)),
        )
        cfg.validate()
        return cfg

    def experiment_suites(self) -> List[str]:
        suites = self.get("experiment.suites", ["structural"])
        for suite in suites:
            if suite not in KNOWN_SUITES:
                raise ConfigError(
                    f"unknown suite '{suite}'; known: {', '.join(KNOWN_SUITES)}"
                )
        return list(suites)

    def experiment_grid(self, defaults: Tuple[str, ...]) -> Dict[str, object]:
        return {
            "mechanisms": tuple(self.get("experiment.mechanisms", list(defaults))),
            "gammas": tuple(self.get("experiment.gammas", [0.05, 0.12])),
            "placements": tuple(self.get("experiment.placements", ["late"])),
            "replications": int(self.get("experiment.replications", 10)),
            "horizons": tuple(self.get("experiment.horizons", [1, 5, 20])),
            "dgps": tuple(self.get("experiment.dgps", list(BASELINE_DGPS))),
            "attribution_seeds": int(self.get("experiment.attribution_seeds", 5)),
            "subset_fraction": float(self.get("experiment.subset_fraction", 0.25)),
        }

    def to_manifest_dict(self) -> Dict[str, object]:
        return dict(sorted(self.values.items()))


def validate_mechanisms(mechanisms) -> None:
    known = set(STRUCTURAL_MECHANISMS) | set(MARKET_MECHANISMS)
    for mech in mechanisms:
        if mech not in known:
            raise ConfigError(f"unknown anomaly mechanism '{mech}'")

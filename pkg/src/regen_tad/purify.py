"""Iterative reconstruction-error trimming of the training window set.

Each round fits a fresh reconstruction-only model on the currently retained
windows, scores every retained window by squared reconstruction error, and
drops those at or above the trim quantile, subject to a hard cap on the
total removed fraction. Retraining from scratch each round keeps a heavily
contaminated first fit from anchoring later rounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .backbone import BackboneConfig, evaluate_windows, init_state, train_backbone
from .windowing import WindowPair

logger = logging.getLogger(__name__)

MIN_WINDOWS_FOR_PURIFY = 20


class PurifyConfigError(ValueError):
    pass


@dataclass
class PurifyConfig:
    trim_quantile: float = 0.97
    max_removal: float = 0.30
    max_iterations: int = 3
    epochs: int = 10

    def validate(self) -> None:
        if not (0.5 < self.trim_quantile < 1.0):
            raise PurifyConfigError(
                f"trim_quantile must be in (0.5, 1), got {self.trim_quantile}"
            )
        if not (0.0 < self.max_removal < 0.5):
            raise PurifyConfigError(
                f"max_removal must be in (0, 0.5), got {self.max_removal}"
            )
        if self.max_iterations < 1 or self.epochs < 1:
            raise PurifyConfigError("max_iterations and epochs must be >= 1")


@dataclass
class PurifyIteration:
    removed_anchors: List[int]
    error_quantile: float
    cap_truncated: bool


@dataclass
class PurifyReport:
    initial_count: int
    retained_anchors: List[int]
    iterations: List[PurifyIteration] = field(default_factory=list)
    skipped: bool = False

    @property
    def removed_anchors(self) -> List[int]:
        out: List[int] = []
        for it in self.iterations:
            out.extend(it.removed_anchors)
        return out

    @property
    def removal_fraction(self) -> float:
        if self.initial_count == 0:
            return 0.0
        return len(self.removed_anchors) / self.initial_count

    def to_dict(self) -> Dict:
        return {
            "initial_count": self.initial_count,
            "retained_count": len(self.retained_anchors),
            "removal_fraction": self.removal_fraction,
            "skipped": self.skipped,
            "iterations": [
                {
                    "removed_anchors": it.removed_anchors,
                    "error_quantile": it.error_quantile,
                    "cap_truncated": it.cap_truncated,
                }
                for it in self.iterations
            ],
        }


def purify(
    windows: Sequence[WindowPair],
    backbone_cfg: BackboneConfig,
    purify_cfg: PurifyConfig,
    seed: int,
) -> Tuple[List[int], PurifyReport]:
    """Return (retained window positions, report).

    Positions index into ``windows``; the report records anchors (panel row
    ids) for traceability. Sets shrink monotonically and the removed share
    never exceeds ``max_removal`` of the initial count.
    """
    purify_cfg.validate()
    n0 = len(windows)
    anchors = [w.index for w in windows]
    if n0 < MIN_WINDOWS_FOR_PURIFY:
        logger.warning(
            "purification skipped: %d windows < minimum %d", n0, MIN_WINDOWS_FOR_PURIFY
        )
        report = PurifyReport(initial_count=n0, retained_anchors=list(anchors), skipped=True)
        return list(range(n0)), report

    seed_seq = np.random.SeedSequence(seed)
    iter_seeds = seed_seq.generate_state(2 * purify_cfg.max_iterations)
    cap_total = int(np.floor(purify_cfg.max_removal * n0))
    retained = list(range(n0))
    report = PurifyReport(initial_count=n0, retained_anchors=[])

    for k in range(purify_cfg.max_iterations):
        subset = [windows[i] for i in retained]
        state = init_state(backbone_cfg, seed=int(iter_seeds[2 * k]))
        train_backbone(
            state,
            subset,
            seed=int(iter_seeds[2 * k + 1]),
            recon_only=True,
            epochs=purify_cfg.epochs,
        )
        errors = evaluate_windows(state, subset)["recon_sq_error"]
        threshold = float(np.quantile(errors, purify_cfg.trim_quantile))
        candidates = [(pos, err) for pos, err in zip(retained, errors) if err >= threshold]

        removed_so_far = n0 - len(retained)
        budget = cap_total - removed_so_far
        truncated = len(candidates) > budget
        if truncated:
            candidates.sort(key=lambda item: -item[1])
            candidates = candidates[:budget]
            logger.warning(
                "purification cap reached: keeping %d highest-error removals", budget
            )

        report.iterations.append(
            PurifyIteration(
                removed_anchors=sorted(anchors[pos] for pos, _ in candidates),
                error_quantile=threshold,
                cap_truncated=truncated,
            )
        )
        if not candidates:
            break
        removed_set = {pos for pos, _ in candidates}
        retained = [pos for pos in retained if pos not in removed_set]
        if truncated:
            break

    report.retained_anchors = [anchors[pos] for pos in retained]
    return retained, report

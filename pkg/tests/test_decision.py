"""Rank/threshold decision rules and run-length/dilation post-processing."""

import numpy as np
import pytest

from regen_tad.decision import (
    DecisionConfig,
    DecisionError,
    decide,
    flag_count,
    postprocess,
    rank_decision,
    threshold_decision,
)

RNG = np.random.default_rng(13)


def test_rank_flags_exactly_top_five():
    scores = RNG.permutation(100).astype(float)
    labels = rank_decision(scores, alpha=0.05)
    assert labels.sum() == 5
    assert set(np.flatnonzero(labels)) == set(np.argsort(-scores)[:5])


def test_rank_tie_break_earlier_index():
    labels = rank_decision(np.ones(10), alpha=0.2)
    np.testing.assert_array_equal(np.flatnonzero(labels), [0, 1])


def test_rank_alpha_near_one_flags_all():
    labels = rank_decision(RNG.normal(size=7), alpha=0.999)
    assert labels.sum() == 7


def test_flag_count_float_hazard():
    # 0.07 * 100 floats to 7.000000000000001; the count must still be 7.
    assert flag_count(0.07, 100) == 7
    assert flag_count(0.05, 100) == 5
    assert flag_count(0.051, 100) == 6
    assert flag_count(0.29, 100) == 29


def test_rank_invariant_to_monotone_transform():
    scores = RNG.normal(size=60)
    base = rank_decision(scores, alpha=0.1)
    for fn in (lambda s: 2.0 * s + 5.0, np.exp, lambda s: s**3):
        np.testing.assert_array_equal(rank_decision(fn(scores), alpha=0.1), base)


def test_rank_count_exact_regardless_of_distribution():
    for n in (1, 7, 50, 101):
        for alpha in (0.01, 0.05, 0.33, 0.5):
            labels = rank_decision(RNG.exponential(size=n), alpha)
            assert labels.sum() == flag_count(alpha, n)


# -- threshold ------------------------------------------------------------------

def test_threshold_all_below_gives_zero():
    labels = threshold_decision(np.zeros(10), tau=0.5)
    assert labels.sum() == 0


def test_threshold_exact_value_not_flagged():
    labels = threshold_decision(np.array([0.2, 0.5, 0.7]), tau=0.5)
    np.testing.assert_array_equal(labels, [0, 0, 1])


def test_threshold_quantile_property():
    # Reusing calibration scores as test input keeps the flagged share at or
    # under alpha plus one quantization step.
    for seed in range(20):
        scores = np.random.default_rng(seed).normal(size=100)
        tau = np.quantile(scores, 0.95)
        frac = threshold_decision(scores, tau).mean()
        assert frac <= 0.05 + 1.0 / scores.size


# -- post-processing -------------------------------------------------------------

def test_min_run_removes_isolated_detection():
    np.testing.assert_array_equal(postprocess(np.array([0, 1, 0]), min_run=2), [0, 0, 0])


def test_dilation_expands_surviving_run():
    out = postprocess(np.array([0, 1, 1, 0]), min_run=1, dilation_radius=1)
    np.testing.assert_array_equal(out, [1, 1, 1, 1])


def test_postprocess_defaults_are_identity():
    labels = (RNG.random(30) < 0.3).astype(int)
    np.testing.assert_array_equal(postprocess(labels, 1, 0), labels)


def test_run_filter_idempotent_without_dilation():
    labels = (RNG.random(50) < 0.4).astype(int)
    once = postprocess(labels, min_run=3, dilation_radius=0)
    twice = postprocess(once, min_run=3, dilation_radius=0)
    np.testing.assert_array_equal(once, twice)


def test_dilation_clipped_at_boundaries():
    out = postprocess(np.array([1, 0, 0, 1]), min_run=1, dilation_radius=2)
    np.testing.assert_array_equal(out, [1, 1, 1, 1])


# -- decide wrapper ---------------------------------------------------------------

def test_decide_rank_summary_counts():
    scores = np.array([0.1, 5.0, 0.2, 4.0, 0.3, 3.0])
    result = decide(scores, DecisionConfig(mode="rank", alpha=0.5, min_run=2), tau=float("nan"))
    assert result.removed_by_run_filter >= 0
    assert result.labels.sum() <= 3


def test_decide_threshold_requires_finite_tau():
    with pytest.raises(DecisionError):
        decide(np.zeros(3), DecisionConfig(mode="threshold"), tau=float("nan"))


def test_decide_config_validation():
    with pytest.raises(DecisionError):
        DecisionConfig(mode="topk").validate()
    with pytest.raises(DecisionError):
        DecisionConfig(alpha=0.0).validate()
    with pytest.raises(DecisionError):
        DecisionConfig(min_run=0).validate()

"""Window construction, split bounds, and normalization discipline."""

import numpy as np
import pytest

from regen_tad.windowing import (
    SplitError,
    WindowError,
    apply_norm,
    build_windows,
    fit_norm,
    split_indices,
    window_count,
)

RNG = np.random.default_rng(3)


def test_window_count_formula():
    data = RNG.normal(size=(10, 2))
    pairs = build_windows(data, length=3, horizon=2)
    assert len(pairs) == 6 == window_count(10, 3, 2)


def test_single_window_when_t_equals_l_plus_h():
    data = RNG.normal(size=(5, 2))
    pairs = build_windows(data, length=3, horizon=2)
    assert len(pairs) == 1
    assert pairs[0].index == 2


def test_first_window_contents_bit_exact():
    data = RNG.normal(size=(12, 3))
    pairs = build_windows(data, length=4, horizon=2)
    np.testing.assert_array_equal(pairs[0].x, data[0:4])
    np.testing.assert_array_equal(pairs[0].f, data[4:6])
    assert pairs[0].index == 3


def test_too_short_panel_rejected():
    with pytest.raises(WindowError):
        build_windows(RNG.normal(size=(4, 2)), length=3, horizon=2)


def test_window_count_formula_sweep():
    for t in range(8, 30):
        for length in range(1, 6):
            for horizon in range(1, 4):
                if t < length + horizon:
                    continue
                pairs = build_windows(RNG.normal(size=(t, 2)), length, horizon)
                assert len(pairs) == t - horizon - length + 1


# -- splits -----------------------------------------------------------------

def test_split_matches_reference_partition():
    s = split_indices(500, length=36, horizon=5, t0=300, t1=400)
    # 0-based anchors; +1 recovers the 1-based bookkeeping convention.
    assert s.train[0] + 1 == 36 and s.train[-1] + 1 == 295
    assert s.calibration[0] + 1 == 296 and s.calibration[-1] + 1 == 395
    assert s.test[0] + 1 == 396 and s.test[-1] + 1 == 495


def test_split_sets_disjoint_and_ordered():
    s = split_indices(500, 36, 5, 300, 400)
    assert not set(s.train) & set(s.test)
    assert not set(s.train) & set(s.calibration)
    assert not set(s.calibration) & set(s.test)
    assert s.train[-1] < s.calibration[0] <= s.calibration[-1] < s.test[0]


def test_split_future_blocks_respect_boundaries():
    rng = np.random.default_rng(11)
    for _ in range(200):
        length = int(rng.integers(2, 20))
        horizon = int(rng.integers(1, 10))
        t0 = length + horizon + int(rng.integers(1, 50))
        t1 = t0 + int(rng.integers(1, 50))
        t = t1 + int(rng.integers(1, 50)) + horizon
        if not (length < t0 - horizon < t1 - horizon < t - horizon):
            continue
        s = split_indices(t, length, horizon, t0, t1)
        assert s.train[-1] + horizon <= t0 - 1
        assert s.calibration[-1] + horizon <= t1 - 1
        assert s.test[-1] + horizon <= t - 1


def test_split_rejects_bad_ordering():
    with pytest.raises(SplitError):
        split_indices(500, 36, 5, 40, 400)
    with pytest.raises(SplitError):
        split_indices(500, 36, 5, 300, 300)
    with pytest.raises(SplitError):
        split_indices(500, 36, 5, 300, 500)


# -- normalization ------------------------------------------------------------

def test_norm_hand_value():
    data = np.zeros((10, 1))
    data[:, 0] = [5, 7, 3, 5, 7, 3, 5, 7, 3, 9]
    stats = fit_norm(data, train_rows=9)
    stats.mean[0] = 5.0
    stats.std[0] = 2.0
    assert apply_norm(np.array([[9.0]]), stats)[0, 0] == 2.0


def test_norm_not_idempotent():
    data = RNG.normal(loc=3.0, scale=2.0, size=(50, 2))
    stats = fit_norm(data, train_rows=50)
    once = apply_norm(data, stats)
    twice = apply_norm(once, stats)
    assert not np.allclose(once, twice)


def test_normalized_training_rows_standard():
    data = RNG.normal(loc=-2.0, scale=5.0, size=(200, 4))
    stats = fit_norm(data, train_rows=120)
    z = apply_norm(data, stats)[:120]
    assert np.all(np.abs(z.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(z.std(axis=0, ddof=1) - 1.0) < 1e-10)


def test_constant_feature_floored_and_recorded():
    data = RNG.normal(size=(30, 3))
    data[:, 1] = 4.2
    stats = fit_norm(data, train_rows=30)
    assert stats.constant_features == [1]
    assert stats.std[1] == pytest.approx(1e-8)


def test_norm_uses_training_rows_only():
    data = RNG.normal(size=(100, 2))
    stats = fit_norm(data, train_rows=60)
    mutated = data.copy()
    mutated[60:] += 100.0
    stats2 = fit_norm(mutated, train_rows=60)
    np.testing.assert_array_equal(stats.mean, stats2.mean)
    np.testing.assert_array_equal(stats.std, stats2.std)

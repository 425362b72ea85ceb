"""Backbone wiring, losses, training behavior, and checkpoint round-trips."""

import numpy as np
import pytest

from regen_tad.autodiff import Tensor, no_grad
from regen_tad.backbone import (
    BackboneConfig,
    ForwardOutput,
    NumericDivergenceError,
    composite_loss,
    encode,
    forward,
    init_state,
    load_checkpoint,
    reconstruct,
    reconstruction_loss,
    save_checkpoint,
    train_backbone,
)
from regen_tad.nn_ops import ConfigurationError
from regen_tad.windowing import WindowPair

RNG = np.random.default_rng(99)


def tiny_config(**kw) -> BackboneConfig:
    base = dict(
        window_length=6,
        horizon=2,
        n_features=3,
        conv_layers=2,
        conv_filters=4,
        conv_width=3,
        embed_dim=8,
        n_heads=2,
        ff_width=8,
        dropout=0.1,
        lstm_hidden=2,
        latent_dim=4,
        refine_hidden=8,
        batch_size=8,
        epochs=5,
    )
    base.update(kw)
    return BackboneConfig(**base)


def make_windows(cfg: BackboneConfig, n: int, rng) -> list:
    return [
        WindowPair(
            index=i + cfg.window_length - 1,
            x=rng.normal(size=(cfg.window_length, cfg.n_features)),
            f=rng.normal(size=(cfg.horizon, cfg.n_features)),
        )
        for i in range(n)
    ]


def test_config_rejects_indivisible_heads():
    with pytest.raises(ConfigurationError):
        tiny_config(embed_dim=9).validate()


def test_default_config_is_valid():
    BackboneConfig(window_length=36, horizon=5, n_features=20).validate()


def test_forward_shapes_default_config():
    cfg = BackboneConfig(window_length=36, horizon=5, n_features=20)
    state = init_state(cfg, seed=1)
    x = Tensor(RNG.normal(size=(2, 36, 20)))
    f = Tensor(RNG.normal(size=(2, 5, 20)))
    with no_grad():
        out = forward(state, x, f)
    assert out.latent.shape == (2, 128)
    assert out.recon.shape == (2, 36, 20)
    assert out.forecast1.shape == (2, 5, 20)
    assert out.forecast2.shape == (2, 5, 20)


def test_eval_forward_deterministic():
    cfg = tiny_config()
    state = init_state(cfg, seed=2)
    x = Tensor(RNG.normal(size=(3, 6, 3)))
    f = Tensor(RNG.normal(size=(3, 2, 3)))
    with no_grad():
        a = forward(state, x, f)
        b = forward(state, x, f)
    assert np.array_equal(a.latent.data, b.latent.data)
    assert np.array_equal(a.forecast2.data, b.forecast2.data)


def test_fresh_state_reconstruction_sanity_envelope():
    # Envelope pinned from seeded runs at the default architecture: an
    # untrained state on standardized noise lands within +-50% of the unit
    # input variance (measured 1.24-1.36 across init seeds 1-4).
    cfg = BackboneConfig(window_length=36, horizon=5, n_features=20, dropout=0.0)
    state = init_state(cfg, seed=3)
    rng = np.random.default_rng(103)
    x = Tensor(rng.normal(size=(64, 36, 20)))
    with no_grad():
        z = encode(state, x)
        x_hat = reconstruct(state, z)
    mse = float(((x.data - x_hat.data) ** 2).mean())
    assert 0.5 <= mse <= 1.5


def test_forward_raises_on_nan_input():
    cfg = tiny_config()
    state = init_state(cfg, seed=5)
    x = np.zeros((1, 6, 3))
    x[0, 0, 0] = np.nan
    with pytest.raises(NumericDivergenceError) as err:
        with no_grad():
            forward(state, Tensor(x), Tensor(np.zeros((1, 2, 3))))
    assert "layer" in str(err.value)


# -- composite loss -------------------------------------------------------------

def _manual_output(z, recon, f1, f2) -> ForwardOutput:
    return ForwardOutput(
        latent=Tensor(z), recon=Tensor(recon), forecast1=Tensor(f1), forecast2=Tensor(f2)
    )


def test_composite_loss_zero_when_perfect():
    x = RNG.normal(size=(1, 4, 3))
    f = RNG.normal(size=(1, 2, 3))
    out = _manual_output(np.zeros((1, 4)), x, f, f)
    loss = composite_loss(out, Tensor(x), Tensor(f), (0.2, 0.8, 0.5), 0.0)
    assert loss.item() == 0.0


def test_composite_loss_hand_value():
    x = RNG.normal(size=(1, 4, 3))
    f = RNG.normal(size=(1, 2, 3))
    out = _manual_output(np.zeros((1, 4)), x, f - 1.0, f)
    loss = composite_loss(out, Tensor(x), Tensor(f), (0.2, 0.8, 0.5), 0.0)
    assert loss.item() == pytest.approx(0.2 * 6.0, abs=1e-12)


def test_composite_loss_latent_penalty_only():
    x = RNG.normal(size=(1, 4, 3))
    f = RNG.normal(size=(1, 2, 3))
    z = np.zeros((1, 4))
    z[0, 0] = 1.0
    out = _manual_output(z, x, f, f)
    loss = composite_loss(out, Tensor(x), Tensor(f), (0.2, 0.8, 0.5), 1.0)
    assert loss.item() == pytest.approx(1.0, abs=1e-12)


def test_composite_loss_weight_linearity():
    x = RNG.normal(size=(2, 4, 3))
    f = RNG.normal(size=(2, 2, 3))
    out = _manual_output(RNG.normal(size=(2, 4)), RNG.normal(size=(2, 4, 3)),
                         RNG.normal(size=(2, 2, 3)), RNG.normal(size=(2, 2, 3)))
    base = composite_loss(out, Tensor(x), Tensor(f), (0.2, 0.8, 0.5), 0.3).item()
    for a in (0.5, 2.0, 7.0):
        scaled = composite_loss(
            out, Tensor(x), Tensor(f), (0.2 * a, 0.8 * a, 0.5 * a), 0.3 * a
        ).item()
        assert scaled == pytest.approx(a * base, rel=1e-12)


def test_refinement_null_case():
    cfg = tiny_config(dropout=0.0)
    state = init_state(cfg, seed=7)
    state.params["ref_w1"].data[:] = 0.0
    state.params["ref_b1"].data[:] = 0.0
    state.params["ref_w2"].data[:] = 0.0
    state.params["ref_b2"].data[:] = 0.0
    x = Tensor(RNG.normal(size=(2, 6, 3)))
    f = Tensor(RNG.normal(size=(2, 2, 3)))
    with no_grad():
        out = forward(state, x, f)
    np.testing.assert_array_equal(out.forecast2.data, out.forecast1.data)
    only_w1 = composite_loss(out, x, f, (1.0, 0.0, 0.0), 0.0).item()
    only_w2 = composite_loss(out, x, f, (0.0, 1.0, 0.0), 0.0).item()
    assert only_w2 == pytest.approx(only_w1, rel=1e-12)


# -- training ---------------------------------------------------------------------

def test_zero_epochs_leaves_state_bit_identical():
    cfg = tiny_config(epochs=0)
    state = init_state(cfg, seed=11)
    before = {k: v.data.copy() for k, v in state.params.items()}
    trace = train_backbone(state, make_windows(cfg, 4, np.random.default_rng(0)), seed=1)
    assert trace == []
    for k, v in state.params.items():
        assert np.array_equal(v.data, before[k])


def test_single_window_overfit():
    cfg = tiny_config(dropout=0.0, batch_size=1, learning_rate=3e-3)
    state = init_state(cfg, seed=13)
    windows = make_windows(cfg, 1, np.random.default_rng(5))
    x, f = Tensor(windows[0].x[None]), Tensor(windows[0].f[None])
    with no_grad():
        initial = composite_loss(
            forward(state, x, f), x, f, cfg.loss_weights, cfg.latent_penalty
        ).item()
    train_backbone(state, windows, seed=3, epochs=500)
    with no_grad():
        final = composite_loss(
            forward(state, x, f), x, f, cfg.loss_weights, cfg.latent_penalty
        ).item()
    assert final < 0.01 * initial


def test_loss_trace_improves_on_average():
    cfg = tiny_config(dropout=0.0)
    state = init_state(cfg, seed=17)
    rng = np.random.default_rng(8)
    windows = [
        WindowPair(index=i + 5, x=np.tile(base := rng.normal(size=(1, 3)), (6, 1)) + 0.05 * rng.normal(size=(6, 3)), f=np.tile(base, (2, 1)))
        for i in range(32)
    ]
    trace = train_backbone(state, windows, seed=4, epochs=15)
    assert np.mean(trace[-5:]) < np.mean(trace[:5])


def test_recon_only_leaves_forecast_heads_untouched():
    cfg = tiny_config(dropout=0.0)
    state = init_state(cfg, seed=19)
    before = {
        k: state.params[k].data.copy()
        for k in ("fc_w", "fc_b", "ref_w1", "ref_b1", "ref_w2", "ref_b2")
    }
    train_backbone(state, make_windows(cfg, 8, np.random.default_rng(2)), seed=5,
                   recon_only=True, epochs=3)
    for k, v in before.items():
        assert np.array_equal(state.params[k].data, v)


def test_recon_only_separates_spiked_window():
    cfg = tiny_config(dropout=0.0, epochs=30)
    state = init_state(cfg, seed=23)
    rng = np.random.default_rng(6)
    windows = make_windows(cfg, 40, rng)
    train_backbone(state, windows, seed=7, recon_only=True)
    spiked = WindowPair(index=0, x=windows[0].x.copy(), f=windows[0].f)
    spiked.x[2] += 5.0
    with no_grad():
        clean_errors = []
        for w in windows:
            z = encode(state, Tensor(w.x[None]))
            clean_errors.append(
                reconstruction_loss(reconstruct(state, z), Tensor(w.x[None])).item()
            )
        zs = encode(state, Tensor(spiked.x[None]))
        spike_err = reconstruction_loss(reconstruct(state, zs), Tensor(spiked.x[None])).item()
    assert spike_err > np.median(clean_errors)


def test_training_determinism():
    cfg = tiny_config()
    windows = make_windows(cfg, 12, np.random.default_rng(9))
    s1 = init_state(cfg, seed=29)
    s2 = init_state(cfg, seed=29)
    t1 = train_backbone(s1, windows, seed=11, epochs=4)
    t2 = train_backbone(s2, windows, seed=11, epochs=4)
    assert t1 == t2
    for k in s1.params:
        assert np.array_equal(s1.params[k].data, s2.params[k].data)


# -- checkpoints --------------------------------------------------------------------

def test_checkpoint_round_trip_bit_identical(tmp_path):
    cfg = tiny_config()
    state = init_state(cfg, seed=31)
    train_backbone(state, make_windows(cfg, 8, np.random.default_rng(3)), seed=13, epochs=2)
    x = Tensor(RNG.normal(size=(2, 6, 3)))
    f = Tensor(RNG.normal(size=(2, 2, 3)))
    with no_grad():
        before = forward(state, x, f)
    path = str(tmp_path / "model.npz")
    save_checkpoint(state, path)
    loaded = load_checkpoint(path)
    assert loaded.adam_step == state.adam_step
    with no_grad():
        after = forward(loaded, x, f)
    assert np.array_equal(before.latent.data, after.latent.data)
    assert np.array_equal(before.recon.data, after.recon.data)
    assert np.array_equal(before.forecast2.data, after.forecast2.data)


def test_checkpoint_rejects_tampered_config(tmp_path):
    cfg = tiny_config()
    state = init_state(cfg, seed=37)
    path = str(tmp_path / "model.npz")
    save_checkpoint(state, path)
    blob = dict(np.load(path, allow_pickle=False))
    blob["config_hash"] = np.array("0" * 64)
    np.savez(path, **blob)
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_training_divergence_raises():
    # Adam steps are bounded by the learning rate, so the rate itself must
    # push parameters past float range to overflow the forward pass.
    cfg = tiny_config(dropout=0.0, learning_rate=1e200, epochs=5, batch_size=4)
    state = init_state(cfg, seed=41)
    windows = make_windows(cfg, 8, np.random.default_rng(7))
    with pytest.raises(NumericDivergenceError), np.errstate(all="ignore"):
        train_backbone(state, windows, seed=1)

"""Contract and gradient checks for the neural kernels."""

import numpy as np
import pytest

from regen_tad.autodiff import Tensor
from regen_tad.nn_ops import (
    AttentionParams,
    BiLSTMParams,
    ConfigurationError,
    LSTMParams,
    bilstm,
    conv1d,
    dropout,
    layer_norm,
    multihead_attention,
    positional_encoding,
)

from gradcheck import check_tensor_grad

RNG = np.random.default_rng(42)


def _attn_params(dim: int, rng) -> AttentionParams:
    def w():
        return Tensor(rng.normal(scale=0.4, size=(dim, dim)), requires_grad=True)

    def b():
        return Tensor(np.zeros(dim), requires_grad=True)

    return AttentionParams(w(), b(), w(), b(), w(), b(), w(), b())


def _lstm_params(d_in: int, hidden: int, rng) -> LSTMParams:
    return LSTMParams(
        wx=Tensor(rng.normal(scale=0.4, size=(d_in, 4 * hidden)), requires_grad=True),
        wh=Tensor(rng.normal(scale=0.4, size=(hidden, 4 * hidden)), requires_grad=True),
        b=Tensor(np.zeros(4 * hidden), requires_grad=True),
    )


# -- positional encoding ----------------------------------------------------

def test_positional_encoding_row_zero():
    pe = positional_encoding(5, 8)
    np.testing.assert_array_equal(pe[0, 0::2], np.zeros(4))
    np.testing.assert_array_equal(pe[0, 1::2], np.ones(4))


def test_positional_encoding_scalar_value():
    pe = positional_encoding(4, 6)
    assert pe[1, 0] == pytest.approx(np.sin(1.0), abs=1e-12)
    assert pe[1, 0] == pytest.approx(0.841471, abs=5e-7)


def test_positional_encoding_bounded():
    pe = positional_encoding(64, 32)
    assert np.all(pe >= -1.0) and np.all(pe <= 1.0)


# -- conv1d -----------------------------------------------------------------

def test_conv1d_delta_kernel_passthrough():
    x = RNG.normal(size=(1, 8, 1))
    kernels = np.zeros((3, 1, 1))
    kernels[1, 0, 0] = 1.0
    out = conv1d(Tensor(x), Tensor(kernels), Tensor(np.zeros(1))).data
    np.testing.assert_allclose(out, x)


def test_conv1d_zero_input_gives_bias():
    bias = np.array([1.5, -2.0])
    out = conv1d(Tensor(np.zeros((1, 6, 3))), Tensor(np.zeros((3, 3, 2))), Tensor(bias)).data
    np.testing.assert_allclose(out, np.broadcast_to(bias, (1, 6, 2)))


def test_conv1d_rejects_even_width_and_long_kernel():
    with pytest.raises(ConfigurationError):
        conv1d(Tensor(np.zeros((1, 6, 2))), Tensor(np.zeros((4, 2, 2))), Tensor(np.zeros(2)))
    with pytest.raises(ConfigurationError):
        conv1d(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((5, 2, 2))), Tensor(np.zeros(2)))


def test_conv1d_gradient():
    x = RNG.normal(size=(1, 8, 2))
    k = RNG.normal(size=(3, 2, 4))
    b = RNG.normal(size=(4,))
    r = RNG.normal(size=(1, 8, 4))
    err = check_tensor_grad(
        lambda ts: (conv1d(ts[0], ts[1], ts[2]) * Tensor(r)).sum(), [x, k, b]
    )
    assert err < 1e-4


# -- attention ---------------------------------------------------------------

def test_attention_single_step_equals_value_projection():
    dim = 6
    params = _attn_params(dim, np.random.default_rng(0))
    x = RNG.normal(size=(1, 1, dim))
    out = multihead_attention(Tensor(x), params, n_heads=2).data
    v = x @ params.wv.data + params.bv.data
    expected = v @ params.wo.data + params.bo.data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_attention_identical_rows_give_identical_outputs():
    dim = 8
    params = _attn_params(dim, np.random.default_rng(1))
    row = RNG.normal(size=dim)
    x = np.tile(row, (1, 5, 1))
    out = multihead_attention(Tensor(x), params, n_heads=4).data[0]
    for i in range(1, 5):
        np.testing.assert_allclose(out[i], out[0], atol=1e-12)


def test_attention_rejects_indivisible_heads():
    params = _attn_params(8, np.random.default_rng(2))
    with pytest.raises(ConfigurationError):
        multihead_attention(Tensor(np.zeros((1, 4, 8))), params, n_heads=3)


def test_attention_gradient():
    # Key bias is excluded from the finite-difference sweep: shifting every
    # key by a constant adds the same offset to each score row, and softmax
    # is invariant to that, so its true gradient is identically zero.
    dim, heads = 12, 3
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 6, dim))
    ws = [rng.normal(scale=0.4, size=(dim, dim)) for _ in range(4)]
    bq, bv, bo = [rng.normal(scale=0.1, size=dim) for _ in range(3)]
    bk = rng.normal(scale=0.1, size=dim)
    r = rng.normal(size=(1, 6, dim))

    def build(ts):
        params = AttentionParams(ts[1], ts[5], ts[2], Tensor(bk), ts[3], ts[6], ts[4], ts[7])
        return (multihead_attention(ts[0], params, heads) * Tensor(r)).sum()

    err = check_tensor_grad(build, [x] + ws + [bq, bv, bo])
    assert err < 1e-4


def test_attention_key_bias_gradient_vanishes():
    dim, heads = 8, 2
    rng = np.random.default_rng(7)
    params = _attn_params(dim, rng)
    x = Tensor(rng.normal(size=(1, 5, dim)), requires_grad=True)
    multihead_attention(x, params, heads).sum().backward()
    assert params.bk.grad is not None
    assert np.max(np.abs(params.bk.grad)) < 1e-12


# -- bilstm -------------------------------------------------------------------

def test_bilstm_zero_weights_zero_output():
    d_in, hidden = 4, 3
    zeros = BiLSTMParams(
        forward=LSTMParams(
            Tensor(np.zeros((d_in, 4 * hidden))),
            Tensor(np.zeros((hidden, 4 * hidden))),
            Tensor(np.zeros(4 * hidden)),
        ),
        backward=LSTMParams(
            Tensor(np.zeros((d_in, 4 * hidden))),
            Tensor(np.zeros((hidden, 4 * hidden))),
            Tensor(np.zeros(4 * hidden)),
        ),
    )
    out = bilstm(Tensor(RNG.normal(size=(2, 5, d_in))), zeros).data
    np.testing.assert_array_equal(out, np.zeros((2, 5, 2 * hidden)))


def test_bilstm_single_step_directions_match():
    rng = np.random.default_rng(4)
    p = _lstm_params(3, 2, rng)
    params = BiLSTMParams(forward=p, backward=p)
    x = RNG.normal(size=(1, 1, 3))
    out = bilstm(Tensor(x), params).data[0, 0]
    np.testing.assert_allclose(out[:2], out[2:], atol=1e-12)


def test_bilstm_gradient():
    rng = np.random.default_rng(5)
    d_in, hidden = 4, 3
    x = rng.normal(size=(1, 5, d_in))
    arrays = [x]
    for _ in range(2):
        arrays.append(rng.normal(scale=0.4, size=(d_in, 4 * hidden)))
        arrays.append(rng.normal(scale=0.4, size=(hidden, 4 * hidden)))
        arrays.append(rng.normal(scale=0.1, size=4 * hidden))
    r = rng.normal(size=(1, 5, 2 * hidden))

    def build(ts):
        params = BiLSTMParams(
            forward=LSTMParams(ts[1], ts[2], ts[3]),
            backward=LSTMParams(ts[4], ts[5], ts[6]),
        )
        return (bilstm(ts[0], params) * Tensor(r)).sum()

    assert check_tensor_grad(build, arrays) < 1e-4


# -- layer norm and dropout ---------------------------------------------------

def test_layer_norm_standardizes():
    x = RNG.normal(size=(2, 4, 8)) * 3.0 + 1.0
    out = layer_norm(Tensor(x), Tensor(np.ones(8)), Tensor(np.zeros(8))).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.std(axis=-1), 1.0, atol=1e-3)


def test_layer_norm_gradient():
    x = RNG.normal(size=(1, 3, 6))
    g = RNG.normal(size=6)
    b = RNG.normal(size=6)
    r = RNG.normal(size=(1, 3, 6))
    err = check_tensor_grad(
        lambda ts: (layer_norm(ts[0], ts[1], ts[2]) * Tensor(r)).sum(), [x, g, b]
    )
    assert err < 1e-3


def test_dropout_scaling_and_identity():
    x = np.ones((1000,))
    out = dropout(Tensor(x), 0.5, np.random.default_rng(0)).data
    kept = out[out > 0]
    np.testing.assert_allclose(kept, 2.0)
    assert abs(out.mean() - 1.0) < 0.1
    same = dropout(Tensor(x), 0.0, np.random.default_rng(0)).data
    np.testing.assert_array_equal(same, x)

"""Neural-network kernels used by the window model.

All kernels accept batched inputs ``(B, L, features)`` (a leading batch axis
is required; single windows are passed as batches of one) and are composed
from the differentiable primitives in :mod:`regen_tad.autodiff`, so reverse-
mode gradients flow through them without any kernel-specific backward code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    concat,
    pad_axis,
    sigmoid,
    softmax,
    sqrt,
    tanh,
)


class ConfigurationError(ValueError):
    """A kernel was configured with incompatible sizes."""


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return x @ w + b


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted-scaling Bernoulli dropout; call only on the training path."""
    if rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(np.float64) / keep
    return x * Tensor(mask)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply learned gain and bias."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / sqrt(var + eps)
    return centered * inv * gain + bias


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Sinusoidal position matrix: even columns sin, odd columns cos.

    Entry (tau, 2k) is sin(tau / 10000^(2k/dim)) and entry (tau, 2k+1) is
    cos of the same argument, for tau = 0..length-1.
    """
    if dim < 2:
        raise ConfigurationError("positional encoding needs dim >= 2")
    pe = np.zeros((length, dim))
    tau = np.arange(length, dtype=np.float64)[:, None]
    k = np.arange(dim // 2, dtype=np.float64)[None, :]
    angle = tau / np.power(10000.0, 2.0 * k / dim)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1 : 2 * (dim // 2) : 2] = np.cos(angle)
    return pe


# -- temporal convolution -------------------------------------------------

def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Same-length temporal convolution over ``(B, L, c_in)``.

    ``kernels`` has shape ``(width, c_in, c_out)`` with odd width; the input
    is zero-padded symmetrically so every output step sees a centered
    receptive field and the sequence length is preserved.
    """
    width, c_in, _ = kernels.shape
    if width % 2 == 0:
        raise ConfigurationError(f"conv width must be odd, got {width}")
    length = x.shape[-2]
    if width > length:
        raise ConfigurationError(f"conv width {width} exceeds window length {length}")
    if x.shape[-1] != c_in:
        raise ShapeError(f"conv input channels {x.shape[-1]} != kernel channels {c_in}")
    half = (width - 1) // 2
    padded = pad_axis(x, axis=x.ndim - 2, before=half, after=half)
    out = None
    for k in range(width):
        sl = [slice(None)] * x.ndim
        sl[x.ndim - 2] = slice(k, k + length)
        term = padded[tuple(sl)] @ kernels[k]
        out = term if out is None else out + term
    return out + bias


# -- multi-head self-attention ---------------------------------------------

@dataclass
class AttentionParams:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def multihead_attention(x: Tensor, params: AttentionParams, n_heads: int) -> Tensor:
    """Scaled dot-product self-attention with per-head softmax over keys.

    ``x`` is ``(B, L, d)`` with ``d`` divisible by ``n_heads``; the output
    keeps the same shape after head concatenation and output projection.
    """
    b, length, dim = x.shape
    if dim % n_heads != 0:
        raise ConfigurationError(f"model dim {dim} not divisible by {n_heads} heads")
    head_dim = dim // n_heads

    def split_heads(t: Tensor) -> Tensor:
        return t.reshape(b, length, n_heads, head_dim).transpose((0, 2, 1, 3))

    q = split_heads(linear(x, params.wq, params.bq))
    k = split_heads(linear(x, params.wk, params.bk))
    v = split_heads(linear(x, params.wv, params.bv))

    scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(head_dim))
    attn = softmax(scores, axis=-1)
    ctx = attn @ v  # (B, heads, L, head_dim)
    merged = ctx.transpose((0, 2, 1, 3)).reshape(b, length, dim)
    return linear(merged, params.wo, params.bo)


def attention_weights(x: np.ndarray, params: AttentionParams, n_heads: int) -> np.ndarray:
    """Softmax attention matrices ``(heads, L, L)`` for one window (no grad)."""
    from .autodiff import no_grad

    with no_grad():
        t = Tensor(x[None])
        b, length, dim = t.shape
        head_dim = dim // n_heads
        q = linear(t, params.wq, params.bq).reshape(b, length, n_heads, head_dim).transpose((0, 2, 1, 3))
        k = linear(t, params.wk, params.bk).reshape(b, length, n_heads, head_dim).transpose((0, 2, 1, 3))
        scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(head_dim))
        return softmax(scores, axis=-1).data[0]


# -- bidirectional LSTM ------------------------------------------------------

@dataclass
class LSTMParams:
    """One direction: input/hidden projections onto the stacked gates.

    Gate layout along the last axis is (input, forget, cell, output).
    """

    wx: Tensor  # (d_in, 4*hidden)
    wh: Tensor  # (hidden, 4*hidden)
    b: Tensor  # (4*hidden,)


@dataclass
class BiLSTMParams:
    forward: LSTMParams
    backward: LSTMParams


def _lstm_direction(x: Tensor, p: LSTMParams, reverse: bool) -> list[Tensor]:
    b, length, _ = x.shape
    hidden = p.wh.shape[0]
    h = Tensor(np.zeros((b, hidden)))
    c = Tensor(np.zeros((b, hidden)))
    # Input projection for all steps in one GEMM; the loop only carries the
    # hidden-state recurrence.
    xw = x @ p.wx + p.b  # (B, L, 4*hidden)
    order = range(length - 1, -1, -1) if reverse else range(length)
    outputs: list[Optional[Tensor]] = [None] * length
    for t in order:
        gates = xw[:, t, :] + h @ p.wh
        i = sigmoid(gates[:, 0:hidden])
        f = sigmoid(gates[:, hidden : 2 * hidden])
        g = tanh(gates[:, 2 * hidden : 3 * hidden])
        o = sigmoid(gates[:, 3 * hidden : 4 * hidden])
        c = f * c + i * g
        h = o * tanh(c)
        outputs[t] = h
    return outputs  # type: ignore[return-value]


def bilstm(x: Tensor, params: BiLSTMParams) -> Tensor:
    """Run the recurrence in both directions; concatenate per-step states.

    Output shape is ``(B, L, 2*hidden)`` with the forward state first.
    """
    if x.shape[-2] < 1:
        raise ShapeError("bilstm needs at least one time step")
    b, length, _ = x.shape
    fwd = _lstm_direction(x, params.forward, reverse=False)
    bwd = _lstm_direction(x, params.backward, reverse=True)
    hidden2 = params.forward.wh.shape[0] + params.backward.wh.shape[0]
    steps = [
        concat([fwd[t], bwd[t]], axis=1).reshape(b, 1, hidden2) for t in range(length)
    ]
    return concat(steps, axis=1)

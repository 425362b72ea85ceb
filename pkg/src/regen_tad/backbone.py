"""Window model: convolutional front-end, positional encoding, parallel
attention/recurrent encoders, latent fusion, reconstruction and two-pass
forecasting heads, and the composite training loop.

The refinement pass consumes the first-pass residual, so the forward path
always receives the realized future block; windows are scored once their
future block is observable, which delays scoring by the forecast horizon.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, concat, no_grad, relu
from .nn_ops import (
    AttentionParams,
    BiLSTMParams,
    ConfigurationError,
    LSTMParams,
    bilstm,
    conv1d,
    dropout,
    layer_norm,
    linear,
    multihead_attention,
    positional_encoding,
)
from .windowing import WindowPair

CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Six attention heads do not divide an embedding width of 128, so the
# default embedding is 126 (nearest width divisible by six).
DEFAULT_EMBED_DIM = 126


class NumericDivergenceError(RuntimeError):
    """A forward pass or training step produced non-finite values."""


@dataclass
class BackboneConfig:
    window_length: int
    horizon: int
    n_features: int
    conv_layers: int = 2
    conv_filters: int = 64
    conv_width: int = 3
    embed_dim: int = DEFAULT_EMBED_DIM
    n_heads: int = 6
    ff_width: int = 128
    dropout: float = 0.1
    lstm_hidden: int = 32
    latent_dim: int = 128
    loss_weights: Tuple[float, float, float] = (0.2, 0.8, 0.5)
    latent_penalty: float = 0.0
    refine_hidden: int = 128
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 32

    def validate(self) -> None:
        extents = (
            self.window_length,
            self.horizon,
            self.n_features,
            self.conv_layers,
            self.conv_filters,
            self.embed_dim,
            self.n_heads,
            self.ff_width,
            self.lstm_hidden,
            self.latent_dim,
            self.refine_hidden,
            self.batch_size,
        )
        if any(v < 1 for v in extents):
            raise ConfigurationError("all architecture extents must be positive")
        if self.embed_dim % self.n_heads != 0:
            raise ConfigurationError(
                f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}"
            )
        if self.conv_width % 2 == 0 or self.conv_width > self.window_length:
            raise ConfigurationError(
                f"conv_width {self.conv_width} must be odd and <= window length"
            )
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigurationError(f"dropout must be in [0,1), got {self.dropout}")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(blob: str) -> "BackboneConfig":
        raw = json.loads(blob)
        raw["loss_weights"] = tuple(raw["loss_weights"])
        return BackboneConfig(**raw)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass
class ForwardOutput:
    latent: Tensor  # (B, q)
    recon: Tensor  # (B, L, p)
    forecast1: Tensor  # (B, H, p)
    forecast2: Tensor  # (B, H, p)


@dataclass
class BackboneState:
    cfg: BackboneConfig
    params: Dict[str, Tensor]
    pos: np.ndarray
    adam_m: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_step: int = 0

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape: Tuple[int, ...]) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_state(cfg: BackboneConfig, seed: int) -> BackboneState:
    """Fresh parameters: fan-scaled uniform weights, zero biases, LSTM
    forget-gate bias 1, unit layer-norm gains."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    p: Dict[str, Tensor] = {}

    def param(name: str, arr: np.ndarray) -> None:
        p[name] = Tensor(arr, requires_grad=True)

    c_in = cfg.n_features
    for i in range(cfg.conv_layers):
        shape = (cfg.conv_width, c_in, cfg.conv_filters)
        param(f"conv{i}_k", _glorot(rng, cfg.conv_width * c_in, cfg.conv_filters, shape))
        param(f"conv{i}_b", np.zeros(cfg.conv_filters))
        c_in = cfg.conv_filters

    d = cfg.embed_dim
    param("proj_w", _glorot(rng, cfg.conv_filters, d, (cfg.conv_filters, d)))
    param("proj_b", np.zeros(d))
    param("ln1_g", np.ones(d))
    param("ln1_b", np.zeros(d))
    for name in ("wq", "wk", "wv", "wo"):
        param(f"attn_{name}", _glorot(rng, d, d, (d, d)))
        param(f"attn_b{name[1]}", np.zeros(d))
    param("ln2_g", np.ones(d))
    param("ln2_b", np.zeros(d))
    param("ff_w1", _glorot(rng, d, cfg.ff_width, (d, cfg.ff_width)))
    param("ff_b1", np.zeros(cfg.ff_width))
    param("ff_w2", _glorot(rng, cfg.ff_width, d, (cfg.ff_width, d)))
    param("ff_b2", np.zeros(d))

    h = cfg.lstm_hidden
    for direction in ("fwd", "bwd"):
        param(f"lstm_{direction}_wx", _glorot(rng, d, 4 * h, (d, 4 * h)))
        param(f"lstm_{direction}_wh", _glorot(rng, h, 4 * h, (h, 4 * h)))
        bias = np.zeros(4 * h)
        bias[h : 2 * h] = 1.0
        param(f"lstm_{direction}_b", bias)

    fused = d + 2 * h
    q = cfg.latent_dim
    param("latent_w", _glorot(rng, fused, q, (fused, q)))
    param("latent_b", np.zeros(q))

    lp = cfg.window_length * cfg.n_features
    hp = cfg.horizon * cfg.n_features
    param("recon_w", _glorot(rng, q, lp, (q, lp)))
    param("recon_b", np.zeros(lp))
    param("fc_w", _glorot(rng, q, hp, (q, hp)))
    param("fc_b", np.zeros(hp))
    param("ref_w1", _glorot(rng, hp + q, cfg.refine_hidden, (hp + q, cfg.refine_hidden)))
    param("ref_b1", np.zeros(cfg.refine_hidden))
    param("ref_w2", _glorot(rng, cfg.refine_hidden, hp, (cfg.refine_hidden, hp)))
    param("ref_b2", np.zeros(hp))

    pos = positional_encoding(cfg.window_length, d)
    return BackboneState(cfg=cfg, params=p, pos=pos)


def _check_finite(name: str, t: Tensor) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NumericDivergenceError(f"non-finite values after layer '{name}'")


def _attention_params(p: Dict[str, Tensor]) -> AttentionParams:
    return AttentionParams(
        p["attn_wq"], p["attn_bq"], p["attn_wk"], p["attn_bk"],
        p["attn_wv"], p["attn_bv"], p["attn_wo"], p["attn_bo"],
    )


def _bilstm_params(p: Dict[str, Tensor]) -> BiLSTMParams:
    return BiLSTMParams(
        forward=LSTMParams(p["lstm_fwd_wx"], p["lstm_fwd_wh"], p["lstm_fwd_b"]),
        backward=LSTMParams(p["lstm_bwd_wx"], p["lstm_bwd_wh"], p["lstm_bwd_b"]),
    )


def encode(
    state: BackboneState,
    x: Tensor,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Map a batch of input windows ``(B, L, p)`` to latents ``(B, q)``."""
    cfg = state.cfg
    p = state.params
    h = x
    for i in range(cfg.conv_layers):
        h = relu(conv1d(h, p[f"conv{i}_k"], p[f"conv{i}_b"]))
    _check_finite("conv", h)
    h = linear(h, p["proj_w"], p["proj_b"])
    h = h + Tensor(state.pos)

    attn_in = layer_norm(h, p["ln1_g"], p["ln1_b"])
    attn = multihead_attention(attn_in, _attention_params(p), cfg.n_heads)
    if train and cfg.dropout > 0.0:
        attn = dropout(attn, cfg.dropout, rng)
    u = h + attn
    ff_in = layer_norm(u, p["ln2_g"], p["ln2_b"])
    ff = linear(relu(linear(ff_in, p["ff_w1"], p["ff_b1"])), p["ff_w2"], p["ff_b2"])
    if train and cfg.dropout > 0.0:
        ff = dropout(ff, cfg.dropout, rng)
    encoded = u + ff
    _check_finite("encoder", encoded)

    pooled_attn = encoded.mean(axis=1)
    pooled_rnn = bilstm(h, _bilstm_params(p)).mean(axis=1)
    z = linear(concat([pooled_attn, pooled_rnn], axis=1), p["latent_w"], p["latent_b"])
    _check_finite("latent", z)
    return z


def reconstruct(state: BackboneState, z: Tensor) -> Tensor:
    cfg = state.cfg
    flat = linear(z, state.params["recon_w"], state.params["recon_b"])
    return flat.reshape(z.shape[0], cfg.window_length, cfg.n_features)


def forward(
    state: BackboneState,
    x: Tensor,
    f: Tensor,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> ForwardOutput:
    """Full pass: latent, reconstruction, first forecast, refined forecast.

    ``x`` is ``(B, L, p)`` normalized input, ``f`` the matching ``(B, H, p)``
    future block; the refinement network receives the vectorized first-pass
    residual concatenated with the latent.
    """
    cfg = state.cfg
    p = state.params
    b = x.shape[0]
    z = encode(state, x, train=train, rng=rng)
    x_hat = reconstruct(state, z)
    hp = cfg.horizon * cfg.n_features
    f1 = linear(z, p["fc_w"], p["fc_b"]).reshape(b, cfg.horizon, cfg.n_features)
    residual = (f - f1).reshape(b, hp)
    ref_in = concat([residual, z], axis=1)
    correction = linear(relu(linear(ref_in, p["ref_w1"], p["ref_b1"])), p["ref_w2"], p["ref_b2"])
    f2 = f1 + correction.reshape(b, cfg.horizon, cfg.n_features)
    _check_finite("refinement", f2)
    return ForwardOutput(latent=z, recon=x_hat, forecast1=f1, forecast2=f2)


# -- losses -----------------------------------------------------------------

def composite_loss(
    out: ForwardOutput,
    x: Tensor,
    f: Tensor,
    weights: Tuple[float, float, float],
    latent_penalty: float,
) -> Tensor:
    """Weighted squared-error objective, averaged over the batch.

    Per window: w1*|F-F1|^2 + w2*|F-F2|^2 + wr*|X-Xhat|^2 + lambda*|z|^2
    with squared Frobenius norms.
    """
    w1, w2, wr = weights
    d1 = f - out.forecast1
    d2 = f - out.forecast2
    dr = x - out.recon
    per_window = (
        w1 * (d1 * d1).sum(axis=(1, 2))
        + w2 * (d2 * d2).sum(axis=(1, 2))
        + wr * (dr * dr).sum(axis=(1, 2))
    )
    if latent_penalty != 0.0:
        per_window = per_window + latent_penalty * (out.latent * out.latent).sum(axis=1)
    return per_window.mean()


def reconstruction_loss(x_hat: Tensor, x: Tensor) -> Tensor:
    d = x - x_hat
    return (d * d).sum(axis=(1, 2)).mean()


# -- optimization --------------------------------------------------------------

def adam_step(state: BackboneState, learning_rate: float) -> None:
    state.adam_step += 1
    t = state.adam_step
    bias1 = 1.0 - ADAM_BETA1**t
    bias2 = 1.0 - ADAM_BETA2**t
    for name, p in state.params.items():
        if p.grad is None:
            continue
        g = p.grad
        m = state.adam_m.get(name)
        v = state.adam_v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
            state.adam_m[name] = m
            state.adam_v[name] = v
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        denom = np.sqrt(v / bias2)
        denom += ADAM_EPS
        p.data = p.data - learning_rate * (m / bias1) / denom


def _stack_windows(windows: Sequence[WindowPair]) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.stack([w.x for w in windows])
    fs = np.stack([w.f for w in windows])
    return xs, fs


def train_backbone(
    state: BackboneState,
    windows: Sequence[WindowPair],
    seed: int,
    recon_only: bool = False,
    epochs: Optional[int] = None,
) -> List[float]:
    """Adam over shuffled mini-batches; returns the per-epoch mean loss.

    ``recon_only`` trains with the reconstruction term alone (forecast and
    refinement heads stay out of the loss graph, so their gradients vanish).
    Zero epochs leaves the state bit-identical.
    """
    if not windows:
        raise ValueError("training requires at least one window")
    cfg = state.cfg
    n_epochs = cfg.epochs if epochs is None else epochs
    rng = np.random.default_rng(seed)
    xs, fs = _stack_windows(windows)
    n = xs.shape[0]
    trace: List[float] = []
    for epoch in range(n_epochs):
        order = rng.permutation(n)
        batch_losses: List[float] = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = Tensor(xs[idx])
            state.zero_grad()
            if recon_only:
                z = encode(state, x, train=True, rng=rng)
                loss = reconstruction_loss(reconstruct(state, z), x)
            else:
                f = Tensor(fs[idx])
                out = forward(state, x, f, train=True, rng=rng)
                loss = composite_loss(out, x, f, cfg.loss_weights, cfg.latent_penalty)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericDivergenceError(
                    f"training loss diverged at epoch {epoch}"
                )
            loss.backward()
            adam_step(state, cfg.learning_rate)
            batch_losses.append(value)
        trace.append(float(np.mean(batch_losses)))
    state.zero_grad()
    return trace


def evaluate_windows(
    state: BackboneState,
    windows: Sequence[WindowPair],
    batch_size: int = 64,
) -> Dict[str, np.ndarray]:
    """Deterministic eval-mode outputs for a window sequence.

    Returns arrays keyed ``latent`` (N, q), ``recon_sq_error`` (N,),
    ``recon_residual`` (N,), ``refined_residual`` (N, H, p).
    """
    xs, fs = _stack_windows(windows)
    n = xs.shape[0]
    latents = []
    recon_sq = []
    refined = []
    with no_grad():
        for start in range(0, n, batch_size):
            x = Tensor(xs[start : start + batch_size])
            f = Tensor(fs[start : start + batch_size])
            out = forward(state, x, f, train=False)
            latents.append(out.latent.data)
            diff = x.data - out.recon.data
            recon_sq.append((diff * diff).sum(axis=(1, 2)))
            refined.append(f.data - out.forecast2.data)
    return {
        "latent": np.concatenate(latents, axis=0),
        "recon_sq_error": np.concatenate(recon_sq, axis=0),
        "refined_residual": np.concatenate(refined, axis=0),
    }


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(state: BackboneState, path: str) -> None:
    arrays = {f"param_{k}": v.data for k, v in state.params.items()}
    arrays.update({f"adam_m_{k}": v for k, v in state.adam_m.items()})
    arrays.update({f"adam_v_{k}": v for k, v in state.adam_v.items()})
    np.savez(
        path,
        checkpoint_version=np.array(CHECKPOINT_VERSION),
        config_json=np.array(state.cfg.to_json()),
        config_hash=np.array(state.cfg.content_hash()),
        adam_step=np.array(state.adam_step),
        **arrays,
    )


def load_checkpoint(path: str) -> BackboneState:
    blob = np.load(path, allow_pickle=False)
    version = int(blob["checkpoint_version"])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    cfg_json = str(blob["config_json"])
    cfg = BackboneConfig.from_json(cfg_json)
    stored_hash = str(blob["config_hash"])
    if cfg.content_hash() != stored_hash:
        raise ValueError("checkpoint config hash mismatch")
    state = init_state(cfg, seed=0)
    for name in state.params:
        state.params[name] = Tensor(blob[f"param_{name}"], requires_grad=True)
    state.adam_m = {
        k[len("adam_m_"):]: blob[k] for k in blob.files if k.startswith("adam_m_")
    }
    state.adam_v = {
        k[len("adam_v_"):]: blob[k] for k in blob.files if k.startswith("adam_v_")
    }
    state.adam_step = int(blob["adam_step"])
    return state

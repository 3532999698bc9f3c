"""Sequence-model building blocks assembled on the autodiff tape.

Recurrent layers run through the compiled backend kernels and join the tape
as single fused operations with hand-written adjoints, so a T-step LSTM
costs one tape node instead of ~10T.  Attention and feed-forward blocks are
composed from primitive tape ops.

All attention here is causally masked: position t may attend to positions
<= t only, in self-attention and in cross-attention alike, so every stack
built from these units maps input history to output causally.
"""

from __future__ import annotations

import math

import numpy as np

from wspnet import backend
from wspnet.autodiff import (
    Tensor,
    _record,
    add,
    add_bias,
    layer_norm,
    matmul,
    mul,
    relu,
    reshape,
    softmax,
    transpose,
)
from wspnet.errors import ConfigurationError, ContractError, DimensionError

__all__ = [
    "Module",
    "LSTMParams",
    "GRUParams",
    "AttentionParams",
    "FeedForward",
    "LayerNorm",
    "Linear",
    "EncoderUnit",
    "DecoderUnit",
    "GAUnit",
    "lstm_layer",
    "gru_layer",
    "multihead_attention",
    "positional_encoding",
    "causal_mask",
    "encoder_unit",
    "decoder_unit",
    "ga_unit",
    "xavier_uniform",
    "recurrent_uniform",
]


def xavier_uniform(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


def recurrent_uniform(rng: np.random.Generator, shape, d_h: int) -> np.ndarray:
    limit = 1.0 / math.sqrt(d_h)
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Base for parameterized blocks.

    ``parameters()`` walks attributes in declaration order and yields
    (dotted-name, Tensor) pairs, so parameter order is deterministic for a
    fixed construction sequence; checkpoints key on these names.
    """

    def parameters(self):
        out = []
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                out.append((name, value))
            elif isinstance(value, Module):
                out.extend((f"{name}.{n}", p) for n, p in value.parameters())
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        out.extend((f"{name}.{i}.{n}", p) for n, p in v.parameters())
        return out

    def param_count(self) -> int:
        return sum(p.size for _, p in self.parameters())


def _check_seq_input(x: Tensor, d_in: int, kind: str) -> None:
    if x.ndim != 3:
        raise DimensionError(f"{kind} expects [B,T,d_in] input, got shape {x.shape}")
    if x.shape[1] < 1:
        raise DimensionError(f"{kind} requires at least one timestep, got shape {x.shape}")
    if x.shape[2] != d_in:
        raise DimensionError(f"{kind} built for d_in={d_in}, got input shape {x.shape}")


class LSTMParams(Module):
    """Weights for one LSTM layer; gate blocks ordered (input, forget, candidate, output)."""

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator):
        if d_in < 1 or d_h < 1:
            raise ConfigurationError(f"LSTM widths must be >= 1, got d_in={d_in}, d_h={d_h}")
        self.wx = Tensor(recurrent_uniform(rng, (d_in, 4 * d_h), d_h), requires_grad=True)
        self.wh = Tensor(recurrent_uniform(rng, (d_h, 4 * d_h), d_h), requires_grad=True)
        self.b = Tensor(np.zeros(4 * d_h), requires_grad=True)
        self.d_in = d_in
        self.d_h = d_h

    def __call__(self, x: Tensor) -> Tensor:
        return lstm_layer(x, self)


class GRUParams(Module):
    """Weights for one GRU layer; gate blocks ordered (reset, update, candidate)."""

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator):
        if d_in < 1 or d_h < 1:
            raise ConfigurationError(f"GRU widths must be >= 1, got d_in={d_in}, d_h={d_h}")
        self.wx = Tensor(recurrent_uniform(rng, (d_in, 3 * d_h), d_h), requires_grad=True)
        self.wh = Tensor(recurrent_uniform(rng, (d_h, 3 * d_h), d_h), requires_grad=True)
        self.b = Tensor(np.zeros(3 * d_h), requires_grad=True)
        self.d_in = d_in
        self.d_h = d_h

    def __call__(self, x: Tensor) -> Tensor:
        return gru_layer(x, self)


def lstm_layer(x: Tensor, params: LSTMParams) -> Tensor:
    """Full hidden sequence of an LSTM from zero initial state."""
    _check_seq_input(x, params.d_in, "lstm_layer")
    wx, wh, b = params.wx, params.wh, params.b
    h_data, cache = backend.lstm_forward(x.data, wx.data, wh.data, b.data)
    out = Tensor(h_data)

    def bwd(g):
        return backend.lstm_backward(
            x.data, h_data, wx.data, wh.data, cache, np.ascontiguousarray(g)
        )

    return _record(out, (x, wx, wh, b), bwd)


def gru_layer(x: Tensor, params: GRUParams) -> Tensor:
    """Full hidden sequence of a GRU from zero initial state."""
    _check_seq_input(x, params.d_in, "gru_layer")
    wx, wh, b = params.wx, params.wh, params.b
    h_data, cache = backend.gru_forward(x.data, wx.data, wh.data, b.data)
    out = Tensor(h_data)

    def bwd(g):
        return backend.gru_backward(
            x.data, h_data, wx.data, wh.data, cache, np.ascontiguousarray(g)
        )

    return _record(out, (x, wx, wh, b), bwd)


class Linear(Module):
    """Affine projection along the last axis."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        if d_in < 1 or d_out < 1:
            raise ConfigurationError(f"Linear widths must be >= 1, got {d_in} -> {d_out}")
        self.w = Tensor(xavier_uniform(rng, d_in, d_out), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"Linear built for d_in={self.d_in}, got input shape {x.shape}")
        return add_bias(matmul(x, self.w), self.b)


class AttentionParams(Module):
    """Projections for multi-head scaled dot-product attention."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        if d_model < 1 or n_heads < 1:
            raise ConfigurationError(
                f"attention widths must be >= 1, got d_model={d_model}, heads={n_heads}"
            )
        if d_model % n_heads != 0:
            raise ConfigurationError(
                f"d_model={d_model} is not divisible by head count {n_heads}"
            )
        self.wq = Tensor(xavier_uniform(rng, d_model, d_model), requires_grad=True)
        self.wk = Tensor(xavier_uniform(rng, d_model, d_model), requires_grad=True)
        self.wv = Tensor(xavier_uniform(rng, d_model, d_model), requires_grad=True)
        self.wo = Tensor(xavier_uniform(rng, d_model, d_model), requires_grad=True)
        self.bq = Tensor(np.zeros(d_model), requires_grad=True)
        self.bk = Tensor(np.zeros(d_model), requires_grad=True)
        self.bv = Tensor(np.zeros(d_model), requires_grad=True)
        self.bo = Tensor(np.zeros(d_model), requires_grad=True)
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_k = d_model // n_heads


def causal_mask(t_q: int, t_k: int | None = None) -> np.ndarray:
    """Boolean keep-mask: row t keeps columns <= t."""
    if t_k is None:
        t_k = t_q
    return np.tril(np.ones((t_q, t_k), dtype=bool))


def multihead_attention(
    q: Tensor, k: Tensor, v: Tensor, params: AttentionParams, mask: np.ndarray | None = None
) -> Tensor:
    """Scaled dot-product attention over heads; mask positions get zero weight."""
    if q.ndim != 3 or k.ndim != 3 or v.ndim != 3:
        raise DimensionError(
            f"attention expects [B,T,d_model] inputs, got {q.shape}, {k.shape}, {v.shape}"
        )
    if q.shape[-1] != params.d_model or k.shape[-1] != params.d_model or v.shape[-1] != params.d_model:
        raise DimensionError(
            f"attention built for d_model={params.d_model}, got {q.shape}, {k.shape}, {v.shape}"
        )
    if k.shape != v.shape or q.shape[0] != k.shape[0]:
        raise DimensionError(f"key/value shapes must agree: {k.shape} vs {v.shape}")
    B, t_q, d = q.shape
    t_k = k.shape[1]
    nh, dk = params.n_heads, params.d_k

    qp = add_bias(matmul(q, params.wq), params.bq)
    kp = add_bias(matmul(k, params.wk), params.bk)
    vp = add_bias(matmul(v, params.wv), params.bv)

    def split(x: Tensor, t: int) -> Tensor:
        x = reshape(x, (B, t, nh, dk))
        x = transpose(x, (0, 2, 1, 3))
        return reshape(x, (B * nh, t, dk))

    qh = split(qp, t_q)
    kh = split(kp, t_k)
    vh = split(vp, t_k)
    scores = mul(matmul(qh, transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(dk))
    weights = softmax(scores, axis=-1, mask=mask)
    ctx = matmul(weights, vh)
    ctx = reshape(ctx, (B, nh, t_q, dk))
    ctx = transpose(ctx, (0, 2, 1, 3))
    ctx = reshape(ctx, (B, t_q, d))
    return add_bias(matmul(ctx, params.wo), params.bo)


def positional_encoding(T: int, d_model: int) -> Tensor:
    """Sinusoidal position table: sin on even dims, cos on odd dims."""
    if d_model % 2 != 0:
        raise ConfigurationError(f"positional encoding requires even d_model, got {d_model}")
    if T < 1 or d_model < 2:
        raise ConfigurationError(f"positional encoding needs T>=1, d_model>=2, got {T}, {d_model}")
    pos = np.arange(T, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i / d_model)
    pe = np.empty((T, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return Tensor(pe)


class FeedForward(Module):
    """Position-wise two-layer ReLU network."""

    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        self.w1 = Tensor(xavier_uniform(rng, d_model, d_ff), requires_grad=True)
        self.b1 = Tensor(np.zeros(d_ff), requires_grad=True)
        self.w2 = Tensor(xavier_uniform(rng, d_ff, d_model), requires_grad=True)
        self.b2 = Tensor(np.zeros(d_model), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(add_bias(matmul(x, self.w1), self.b1))
        return add_bias(matmul(h, self.w2), self.b2)


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class EncoderUnit(Module):
    """Self-attention + feed-forward, post-norm residual wraps."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator):
        self.self_attn = AttentionParams(d_model, n_heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng)
        self.norm2 = LayerNorm(d_model)

    def __call__(self, x: Tensor) -> Tensor:
        return encoder_unit(x, self)


class DecoderUnit(Module):
    """Self-attention + cross-attention over memory + feed-forward."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator):
        self.self_attn = AttentionParams(d_model, n_heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.cross_attn = AttentionParams(d_model, n_heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng)
        self.norm3 = LayerNorm(d_model)

    def __call__(self, x: Tensor, memory: Tensor) -> Tensor:
        return decoder_unit(x, memory, self)


class GAUnit(Module):
    """Decoder-style unit with a GRU sublayer between attention and feed-forward."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator):
        self.self_attn = AttentionParams(d_model, n_heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.cross_attn = AttentionParams(d_model, n_heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.gru = GRUParams(d_model, d_model, rng)
        self.norm3 = LayerNorm(d_model)
        self.ff = FeedForward(d_model, d_ff, rng)
        self.norm4 = LayerNorm(d_model)

    def __call__(self, x: Tensor, memory: Tensor) -> Tensor:
        return ga_unit(x, memory, self)


def encoder_unit(x: Tensor, params: EncoderUnit) -> Tensor:
    m = causal_mask(x.shape[1])
    a = multihead_attention(x, x, x, params.self_attn, mask=m)
    h = params.norm1(add(x, a))
    f = params.ff(h)
    return params.norm2(add(h, f))


def decoder_unit(x: Tensor, memory: Tensor, params: DecoderUnit) -> Tensor:
    if memory is None:
        raise ContractError("decoder unit requires encoder memory for cross-attention")
    m = causal_mask(x.shape[1])
    a = multihead_attention(x, x, x, params.self_attn, mask=m)
    h = params.norm1(add(x, a))
    cm = causal_mask(x.shape[1], memory.shape[1])
    c = multihead_attention(h, memory, memory, params.cross_attn, mask=cm)
    h2 = params.norm2(add(h, c))
    f = params.ff(h2)
    return params.norm3(add(h2, f))


def ga_unit(x: Tensor, memory: Tensor, params: GAUnit) -> Tensor:
    if memory is None:
        raise ContractError("GA unit requires encoder memory for cross-attention")
    m = causal_mask(x.shape[1])
    a = multihead_attention(x, x, x, params.self_attn, mask=m)
    h = params.norm1(add(x, a))
    cm = causal_mask(x.shape[1], memory.shape[1])
    c = multihead_attention(h, memory, memory, params.cross_attn, mask=cm)
    h2 = params.norm2(add(h, c))
    g = gru_layer(h2, params.gru)
    h3 = params.norm3(add(h2, g))
    f = params.ff(h3)
    return params.norm4(add(h3, f))

"""Network building blocks: fused kernels, attention and transformer layers.

Post-norm convention throughout: the layer norm sits inside the residual,
after the sublayer output is added.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# Initializers
# ---------------------------------------------------------------------------


def init_linear(params: dict, name: str, fan_in: int, fan_out: int,
                rng: np.random.Generator) -> None:
    bound = 1.0 / np.sqrt(fan_in)
    params[f"{name}.w"] = Tensor(
        rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True
    )
    params[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)


def init_embedding(params: dict, name: str, n_rows: int, dim: int,
                   rng: np.random.Generator) -> None:
    params[name] = Tensor(
        rng.normal(0.0, 0.02, size=(n_rows, dim)), requires_grad=True
    )


def init_layer_norm(params: dict, name: str, dim: int) -> None:
    params[f"{name}.scale"] = Tensor(np.ones(dim), requires_grad=True)
    params[f"{name}.shift"] = Tensor(np.zeros(dim), requires_grad=True)


# ---------------------------------------------------------------------------
# Fused kernels
# ---------------------------------------------------------------------------


def linear(x: Tensor, params: dict, name: str) -> Tensor:
    return x @ params[f"{name}.w"] + params[f"{name}.b"]


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    return table.take_rows(indices)


def layer_norm(x: Tensor, params: dict, name: str, eps: float = 1e-6) -> Tensor:
    scale = params[f"{name}.scale"]
    shift = params[f"{name}.shift"]
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def backward(g):
        d = x.shape[-1]
        if scale.requires_grad:
            scale._accum((g * xhat).reshape(-1, d).sum(axis=0))
        if shift.requires_grad:
            shift._accum(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gx = g * scale.data
            gsum = gx.sum(axis=-1, keepdims=True)
            gdot = (gx * xhat).sum(axis=-1, keepdims=True)
            x._accum(inv * (gx - gsum / d - xhat * gdot / d))

    return Tensor._result(
        xhat * scale.data + shift.data, (x, scale, shift), backward
    )


def normalized(x: Tensor, eps: float = 1e-6) -> Tensor:
    """Layer norm without scale/shift (used by tests)."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def backward(g):
        if x.requires_grad:
            d = x.shape[-1]
            gsum = g.sum(axis=-1, keepdims=True)
            gdot = (g * xhat).sum(axis=-1, keepdims=True)
            x._accum(inv * (g - gsum / d - xhat * gdot / d))

    return Tensor._result(xhat, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """tanh-form smooth gelu."""
    u = SQRT_2_OVER_PI * (x.data + 0.044715 * x.data**3)
    th = np.tanh(u)
    out = 0.5 * x.data * (1.0 + th)

    def backward(g):
        if x.requires_grad:
            du = SQRT_2_OVER_PI * (1.0 + 3 * 0.044715 * x.data**2)
            x._accum(g * (0.5 * (1.0 + th) + 0.5 * x.data * (1.0 - th**2) * du))

    return Tensor._result(out, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis; -inf entries get exactly zero weight."""
    shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * p).sum(axis=-1, keepdims=True)
            x._accum(p * (g - dot))

    return Tensor._result(p, (x,), backward)


def log_softmax(x: Tensor) -> Tensor:
    m = np.max(x.data, axis=-1, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def backward(g):
        if x.requires_grad:
            x._accum(g - p * g.sum(axis=-1, keepdims=True))

    return Tensor._result(out, (x,), backward)


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Set entries where mask is True to value (no gradient through them)."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    out = np.where(mask, value, x.data)

    def backward(g):
        if x.requires_grad:
            x._accum(np.where(mask, 0.0, g))

    return Tensor._result(out, (x,), backward)


# ---------------------------------------------------------------------------
# Attention and transformer blocks
# ---------------------------------------------------------------------------


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    # (..., N, D) -> (..., H, N, D/H)
    *batch, n, d = x.shape
    return x.reshape(*batch, n, n_heads, d // n_heads).swapaxes(-2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    # (..., H, N, dh) -> (..., N, D)
    y = x.swapaxes(-2, -3)
    *batch, n, h, dh = y.shape
    return y.reshape(*batch, n, h * dh)


def attention(q: Tensor, k: Tensor, v: Tensor, key_mask: np.ndarray | None,
              n_heads: int) -> Tensor:
    """Scaled dot-product attention; key_mask marks valid keys (1 = keep)."""
    d_head = q.shape[-1] // n_heads
    qh = _split_heads(q, n_heads)
    kh = _split_heads(k, n_heads)
    vh = _split_heads(v, n_heads)
    scores = (qh @ kh.swapaxes(-1, -2)) * (1.0 / np.sqrt(d_head))
    if key_mask is not None:
        pad = ~np.asarray(key_mask, dtype=bool)
        # broadcast over heads and query rows: (..., 1, 1, N_k)
        pad = pad[..., None, None, :]
        scores = masked_fill(scores, pad, NEG_INF)
    weights = softmax(scores)
    return _merge_heads(weights @ vh)


def self_attention(x: Tensor, mask: np.ndarray | None, params: dict,
                   name: str, n_heads: int) -> Tensor:
    if x.shape[-2] == 0:
        raise ValueError("self_attention on an empty sequence")
    q = linear(x, params, f"{name}.q")
    k = linear(x, params, f"{name}.k")
    v = linear(x, params, f"{name}.v")
    ctx = attention(q, k, v, mask, n_heads)
    return linear(ctx, params, f"{name}.out")


def feed_forward(x: Tensor, params: dict, name: str) -> Tensor:
    return linear(gelu(linear(x, params, f"{name}.in")), params, f"{name}.out")


def init_attention(params: dict, name: str, dim: int,
                   rng: np.random.Generator) -> None:
    for proj in ("q", "k", "v", "out"):
        init_linear(params, f"{name}.{proj}", dim, dim, rng)


def init_feed_forward(params: dict, name: str, dim: int,
                      rng: np.random.Generator) -> None:
    init_linear(params, f"{name}.in", dim, 4 * dim, rng)
    init_linear(params, f"{name}.out", 4 * dim, dim, rng)


def init_transformer_layer(params: dict, name: str, dim: int,
                           rng: np.random.Generator) -> None:
    init_attention(params, f"{name}.attn", dim, rng)
    init_feed_forward(params, f"{name}.ffn", dim, rng)
    init_layer_norm(params, f"{name}.ln1", dim)
    init_layer_norm(params, f"{name}.ln2", dim)


def transformer_layer(x: Tensor, mask: np.ndarray | None, params: dict,
                      name: str, n_heads: int) -> Tensor:
    """Post-norm self-attention block."""
    h = layer_norm(x + self_attention(x, mask, params, f"{name}.attn", n_heads),
                   params, f"{name}.ln1")
    return layer_norm(h + feed_forward(h, params, f"{name}.ffn"),
                      params, f"{name}.ln2")


def init_cross_attention_block(params: dict, name: str, dim: int,
                               rng: np.random.Generator) -> None:
    init_attention(params, f"{name}.attn", dim, rng)
    init_feed_forward(params, f"{name}.ffn", dim, rng)
    init_layer_norm(params, f"{name}.ln", dim)


def cross_attention_block(query: Tensor, kv: Tensor, mask: np.ndarray | None,
                          params: dict, name: str, n_heads: int) -> Tensor:
    """Task-token cross attention: the 1xD attended context is broadcast
    across the N kv rows, added residually, normalized and fed forward."""
    q = linear(query, params, f"{name}.attn.q")
    k = linear(kv, params, f"{name}.attn.k")
    v = linear(kv, params, f"{name}.attn.v")
    ctx = attention(q, k, v, mask, n_heads)
    ctx = linear(ctx, params, f"{name}.attn.out")
    h = layer_norm(ctx + kv, params, f"{name}.ln")
    return feed_forward(h, params, f"{name}.ffn")

"""Alternating temporal and variate self-attention.

One encoding layer applies, with pre-normalization and residuals:

1. temporal attention within each variate's row, where only observed
   positions may serve as keys;
2. variate attention within each time slot across the K variate rows,
   unmasked;
3. a position-wise feed-forward map (D -> 4D -> D).

``encode_block`` stacks J such layers.  The output projection of the
attention carries no bias, so a query whose keys are all masked reduces
exactly to its residual input.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .tensor import Parameter, Tensor

__all__ = ["MultiHeadAttention", "AttentionBlock"]


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _swap_last3(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return tt.transpose(x, axes)


def _dropout(x: Tensor, p: float, rng) -> Tensor:
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.uniform(size=x.shape) >= p) / (1.0 - p)
    return x * Tensor(keep)


class MultiHeadAttention:
    """Scaled dot-product attention with h heads of fixed width."""

    def __init__(self, rng, dim: int, heads: int, head_width: int = 8, prefix: str = "attn"):
        inner = heads * head_width
        self.heads = heads
        self.head_width = head_width
        self.wq = Parameter(f"{prefix}.wq", _uniform(rng, dim, (dim, inner)))
        self.bq = Parameter(f"{prefix}.bq", np.zeros(inner))
        self.wk = Parameter(f"{prefix}.wk", _uniform(rng, dim, (dim, inner)))
        self.bk = Parameter(f"{prefix}.bk", np.zeros(inner))
        self.wv = Parameter(f"{prefix}.wv", _uniform(rng, dim, (dim, inner)))
        self.bv = Parameter(f"{prefix}.bv", np.zeros(inner))
        self.wo = Parameter(f"{prefix}.wo", _uniform(rng, inner, (inner, dim)))

    def parameters(self) -> list[Parameter]:
        return [self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo]

    def _split(self, x: Tensor) -> Tensor:
        # (..., L, h*w) -> (..., h, L, w)
        new = x.shape[:-1] + (self.heads, self.head_width)
        return _swap_last3(tt.reshape(x, new))

    def __call__(self, x: Tensor, key_mask=None, dropout: float = 0.0, rng=None) -> Tensor:
        q = self._split(tt.linear(x, self.wq, self.bq))
        k = self._split(tt.linear(x, self.wk, self.bk))
        v = self._split(tt.linear(x, self.wv, self.bv))
        kt = tt.transpose(k, list(range(k.ndim - 2)) + [k.ndim - 1, k.ndim - 2])
        scores = tt.matmul_batch(q, kt) * (1.0 / np.sqrt(self.head_width))
        if key_mask is None:
            mask = np.ones(scores.shape[-1])
        else:
            mask = np.asarray(key_mask) != 0
            mask = mask[..., None, None, :]  # broadcast over heads and queries
        attn = tt.masked_softmax(scores, mask, axis=-1)
        attn = _dropout(attn, dropout, rng)
        ctx = _swap_last3(tt.matmul_batch(attn, v))
        merged = tt.reshape(ctx, ctx.shape[:-2] + (self.heads * self.head_width,))
        return tt.linear(merged, self.wo)  # no bias: zero context stays zero


class AttentionBlock:
    """J stacked layers of temporal/variate attention plus feed-forward."""

    def __init__(
        self,
        rng,
        dim: int,
        heads: int,
        layers: int,
        head_width: int = 8,
        ff_mult: int = 4,
        dropout: float = 0.0,
        prefix: str = "block",
    ):
        if layers < 1:
            raise ValueError("attention block needs at least one layer")
        self.dim = dim
        self.layers = layers
        self.dropout = dropout
        self.temporal = []
        self.variate = []
        self._params = []
        for j in range(layers):
            lp = f"{prefix}.{j}"
            t_attn = MultiHeadAttention(rng, dim, heads, head_width, prefix=f"{lp}.temporal")
            v_attn = MultiHeadAttention(rng, dim, heads, head_width, prefix=f"{lp}.variate")
            layer = {
                "t_attn": t_attn,
                "t_gain": Parameter(f"{lp}.temporal.ln.gain", np.ones(dim)),
                "t_bias": Parameter(f"{lp}.temporal.ln.bias", np.zeros(dim)),
                "v_attn": v_attn,
                "v_gain": Parameter(f"{lp}.variate.ln.gain", np.ones(dim)),
                "v_bias": Parameter(f"{lp}.variate.ln.bias", np.zeros(dim)),
                "f_w1": Parameter(f"{lp}.ff.w1", _uniform(rng, dim, (dim, ff_mult * dim))),
                "f_b1": Parameter(f"{lp}.ff.b1", np.zeros(ff_mult * dim)),
                "f_w2": Parameter(f"{lp}.ff.w2", _uniform(rng, ff_mult * dim, (ff_mult * dim, dim))),
                "f_b2": Parameter(f"{lp}.ff.b2", np.zeros(dim)),
                "f_gain": Parameter(f"{lp}.ff.ln.gain", np.ones(dim)),
                "f_bias": Parameter(f"{lp}.ff.ln.bias", np.zeros(dim)),
            }
            self.temporal.append(layer)
            self._params.extend(t_attn.parameters())
            self._params.extend([layer["t_gain"], layer["t_bias"]])
            self._params.extend(v_attn.parameters())
            self._params.extend([layer["v_gain"], layer["v_bias"]])
            self._params.extend(
                [layer["f_w1"], layer["f_b1"], layer["f_w2"], layer["f_b2"],
                 layer["f_gain"], layer["f_bias"]]
            )

    def parameters(self) -> list[Parameter]:
        return list(self._params)

    def temporal_attention(self, hidden: Tensor, mask, j: int = 0, rng=None) -> Tensor:
        """Residual attention over the time axis of (..., K, L, D)."""
        layer = self.temporal[j]
        normed = tt.layer_norm(hidden, layer["t_gain"], layer["t_bias"])
        out = layer["t_attn"](normed, key_mask=mask, dropout=self.dropout, rng=rng)
        return hidden + out

    def variate_attention(self, hidden: Tensor, j: int = 0, rng=None) -> Tensor:
        """Residual attention across variates within each time slot."""
        layer = self.temporal[j]
        flipped = _swap_last3(hidden)  # (..., L, K, D)
        normed = tt.layer_norm(flipped, layer["v_gain"], layer["v_bias"])
        out = layer["v_attn"](normed, dropout=self.dropout, rng=rng)
        return hidden + _swap_last3(out)

    def feed_forward(self, hidden: Tensor, j: int = 0, rng=None) -> Tensor:
        layer = self.temporal[j]
        normed = tt.layer_norm(hidden, layer["f_gain"], layer["f_bias"])
        h = tt.maximum(tt.linear(normed, layer["f_w1"], layer["f_b1"]), 0.0)
        h = _dropout(h, self.dropout, rng)
        return hidden + tt.linear(h, layer["f_w2"], layer["f_b2"])

    def encode_block(self, hidden: Tensor, mask, rng=None) -> Tensor:
        """Run all J layers; ``mask`` gates temporal keys only."""
        for j in range(self.layers):
            hidden = self.temporal_attention(hidden, mask, j, rng=rng)
            hidden = self.variate_attention(hidden, j, rng=rng)
            hidden = self.feed_forward(hidden, j, rng=rng)
        return hidden

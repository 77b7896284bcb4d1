"""Input encoding of gridded irregular series.

Four additive embeddings produce H of shape (..., K, L, D):

* value: per-channel affine image of the observed value;
* type: a lookup row per variate id (row 0 marks "nothing observed");
* absolute time: channel one is affine in t, the rest are sinusoids
  with learned frequency and phase;
* relative time: a two-layer perceptron over the gap since the previous
  observation of the same variate (0 before the first).

Each component can be switched off; with everything off H is zero.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .tensor import Parameter, Tensor

__all__ = ["InputEncoder", "observation_intervals"]


def observation_intervals(times: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Gap to the previous observation of the same variate.

    ``times`` (..., L) shared across variates, ``mask`` (..., K, L).
    Positions with no strictly earlier observation get 0.  Pure data
    plumbing: no gradient flows through this.
    """
    times = np.asarray(times, dtype=np.float64)
    mask = np.asarray(mask)
    L = mask.shape[-1]
    idx = np.arange(L)
    cand = np.where(mask > 0, idx, -1)
    run = np.maximum.accumulate(cand, axis=-1)
    prev = np.concatenate(
        [np.full(run.shape[:-1] + (1,), -1, dtype=run.dtype), run[..., :-1]], axis=-1
    )
    t_full = np.broadcast_to(times[..., None, :], mask.shape)
    prev_t = np.take_along_axis(t_full, np.maximum(prev, 0), axis=-1)
    return np.where(prev >= 0, t_full - prev_t, 0.0)


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class InputEncoder:
    def __init__(
        self,
        rng,
        num_variates: int,
        dim: int,
        use_value: bool = True,
        use_type: bool = True,
        use_abs_time: bool = True,
        use_rel_time: bool = True,
        time_scale: float = 1.0,
        prefix: str = "encoder",
    ):
        if dim < 1:
            raise ValueError("encoder: dim must be >= 1")
        self.num_variates = num_variates
        self.dim = dim
        self.use_value = use_value
        self.use_type = use_type
        self.use_abs_time = use_abs_time
        self.use_rel_time = use_rel_time
        self.time_scale = float(time_scale)
        D = dim
        p = prefix
        self.value_w = Parameter(f"{p}.value.w", _uniform(rng, 1, (D,)))
        self.value_b = Parameter(f"{p}.value.b", np.zeros(D))
        self.type_table = Parameter(f"{p}.type.table", _uniform(rng, 1, (num_variates + 1, D)))
        self.abs_w = Parameter(f"{p}.abs_time.w", _uniform(rng, 1, (D,)))
        self.abs_b = Parameter(f"{p}.abs_time.b", np.zeros(D))
        self.rel_w1 = Parameter(f"{p}.rel_time.w1", _uniform(rng, 1, (1, D)))
        self.rel_b1 = Parameter(f"{p}.rel_time.b1", np.zeros(D))
        self.rel_w2 = Parameter(f"{p}.rel_time.w2", _uniform(rng, D, (D, D)))
        self.rel_b2 = Parameter(f"{p}.rel_time.b2", np.zeros(D))
        # channel selector: the first output channel of the absolute-time
        # embedding stays affine, the others pass through sin
        self._chan0 = np.zeros(D)
        self._chan0[0] = 1.0

    def parameters(self) -> list[Parameter]:
        """Only the parameters of enabled components are trainable."""
        out = []
        if self.use_value:
            out += [self.value_w, self.value_b]
        if self.use_type:
            out += [self.type_table]
        if self.use_abs_time:
            out += [self.abs_w, self.abs_b]
        if self.use_rel_time:
            out += [self.rel_w1, self.rel_b1, self.rel_w2, self.rel_b2]
        return out

    def value_embed(self, values) -> Tensor:
        x = tt.as_tensor(values)
        return tt.expand_dims(x, x.ndim) * self.value_w + self.value_b

    def type_embed(self, types: np.ndarray) -> Tensor:
        types = np.asarray(types)
        if types.size and (types.min() < 0 or types.max() > self.num_variates):
            raise ValueError(
                f"type_embed: ids must lie in 0..{self.num_variates}, "
                f"got min={types.min()} max={types.max()}"
            )
        return tt.embedding(self.type_table, types)

    def abs_time_embed(self, times) -> Tensor:
        t = tt.as_tensor(times)
        full = tt.expand_dims(t, t.ndim) * self.abs_w + self.abs_b
        return full * self._chan0 + tt.sin(full) * (1.0 - self._chan0)

    def rel_time_embed(self, intervals) -> Tensor:
        u = tt.as_tensor(intervals)
        u = tt.expand_dims(u, u.ndim)
        hidden = tt.maximum(tt.linear(u, self.rel_w1, self.rel_b1), 0.0)
        return tt.linear(hidden, self.rel_w2, self.rel_b2)

    def encode(self, values, types, mask, times) -> Tensor:
        """Sum of the enabled embeddings, shape (..., K, L, D)."""
        values = np.asarray(values, dtype=np.float64)
        mask = np.asarray(mask)
        if values.shape != mask.shape:
            raise ValueError(f"encode: values {values.shape} vs mask {mask.shape}")
        scaled_t = np.asarray(times, dtype=np.float64) / self.time_scale
        out = Tensor(np.zeros(values.shape + (self.dim,)))
        if self.use_value:
            out = out + self.value_embed(values)
        if self.use_type:
            out = out + self.type_embed(np.asarray(types))
        if self.use_abs_time:
            emb = self.abs_time_embed(scaled_t)
            out = out + tt.expand_dims(emb, emb.ndim - 2)
        if self.use_rel_time:
            out = out + self.rel_time_embed(observation_intervals(scaled_t, mask))
        return out

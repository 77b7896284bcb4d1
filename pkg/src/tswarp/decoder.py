"""Attention pooling and classification heads.

The readout condenses each scale's hidden block twice: first along the
time axis within every variate (observed slots only), then across the
variate axis.  Summing the per-scale vectors gives one fused summary
that feeds a linear classifier.  For step-level labels the final
scale's hidden block is condensed across variates at every time slot
and each slot's vector is combined with the fused summary.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .tensor import Parameter, Tensor

__all__ = ["AttentionPool", "Decoder"]

TASKS = ("sequence", "multi_label", "per_step")


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class AttentionPool:
    """Collapse the second-to-last axis with a learned query.

    Keys are ``tanh`` of an affine map of the source; weights come from
    an unscaled dot product with the query, softmaxed over unmasked
    slots.  A fully masked row pools to the zero vector.
    """

    def __init__(self, rng, dim: int, prefix: str):
        self.query = Parameter(f"{prefix}.query", _uniform(rng, dim, (dim,)))
        self.key_w = Parameter(f"{prefix}.key.w", _uniform(rng, dim, (dim, dim)))
        self.key_b = Parameter(f"{prefix}.key.b", np.zeros(dim))

    def parameters(self) -> list[Parameter]:
        return [self.query, self.key_w, self.key_b]

    def __call__(self, source: Tensor, mask) -> Tensor:
        keys = tt.tanh(tt.linear(source, self.key_w, self.key_b))
        scores = tt.tsum(keys * self.query, axis=-1)
        weights = tt.masked_softmax(scores, np.asarray(mask) != 0, axis=-1)
        lifted = tt.expand_dims(weights, weights.ndim - 1)  # (..., 1, L)
        return tt.squeeze(tt.matmul_batch(lifted, source), lifted.ndim - 2)


class Decoder:
    """Two-stage condensation plus a linear classification head."""

    def __init__(self, rng, dim: int, num_classes: int, task: str = "sequence",
                 prefix: str = "decoder"):
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}, expected one of {TASKS}")
        if num_classes < 1:
            raise ValueError("num_classes must be positive")
        self.dim = dim
        self.num_classes = num_classes
        self.task = task
        self.time_pool = AttentionPool(rng, dim, prefix=f"{prefix}.time")
        self.variate_pool = AttentionPool(rng, dim, prefix=f"{prefix}.variate")
        self.out_w = Parameter(f"{prefix}.out.w", _uniform(rng, dim, (dim, num_classes)))
        self.out_b = Parameter(f"{prefix}.out.b", np.zeros(num_classes))

    def parameters(self) -> list[Parameter]:
        return (self.time_pool.parameters() + self.variate_pool.parameters()
                + [self.out_w, self.out_b])

    def condense_time(self, hidden: Tensor, mask) -> Tensor:
        """(..., K, L, D) with mask (..., K, L) -> (..., K, D)."""
        return self.time_pool(hidden, mask)

    def condense_variate(self, condensed: Tensor) -> Tensor:
        """(..., K, D) -> (..., D); every variate row participates."""
        return self.variate_pool(condensed, np.ones(condensed.shape[:-1]))

    def summarize_scale(self, hidden: Tensor, mask) -> Tensor:
        return self.condense_variate(self.condense_time(hidden, mask))

    def fuse(self, per_scale: list[Tensor]) -> Tensor:
        if not per_scale:
            raise ValueError("fuse needs at least one scale summary")
        total = per_scale[0]
        for vec in per_scale[1:]:
            total = total + vec
        return total

    def classify(self, fused: Tensor) -> Tensor:
        """Fused summary (..., D) -> logits (..., C)."""
        return tt.linear(fused, self.out_w, self.out_b)

    def per_step_logits(self, final_hidden: Tensor, fused: Tensor) -> Tensor:
        """Final-scale hidden (..., K, L, D) -> step logits (..., L, C)."""
        axes = list(range(final_hidden.ndim))
        axes[-3], axes[-2] = axes[-2], axes[-3]
        by_step = tt.transpose(final_hidden, axes)  # (..., L, K, D)
        step_vecs = self.condense_variate(by_step)  # (..., L, D)
        combined = step_vecs + tt.expand_dims(fused, fused.ndim - 1)
        return tt.linear(combined, self.out_w, self.out_b)

    def probabilities(self, logits: Tensor) -> np.ndarray:
        """Detached class probabilities matching the task's link."""
        z = logits.data
        if self.task == "multi_label":
            return 1.0 / (1.0 + np.exp(-z))
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)

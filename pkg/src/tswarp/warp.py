"""Learned temporal re-gridding of per-variate sequences.

Each variate's row of length L_old is re-expressed on L_new slots
through a row-stochastic alignment matrix A (L_new x L_old) built in
five steps:

1. an observation-masked score in (0, 1) per input position;
2. the warping curve: the normalized running sum of the scores, a
   non-decreasing map of positions into (0, 1];
3. uniform segment boundaries on [0, 1], one segment per output slot;
4. a hard support mask selecting, per segment, the input positions
   whose curve value falls inside it.  Segments that would come up
   empty (up-sampling) stretch to the nearest curve values on either
   side so every row keeps support.  This step sees only detached
   values: no gradient crosses the selection;
5. soft weights inside the support, max(lambda - r1, 0) +
   max(r2 - lambda, 0) against the *unadjusted* boundaries, then row
   normalization.  Gradient reaches the scores only through this step.

``apply_warp`` contracts A against features, mask and times.  Columns
at unobserved positions are zeroed and rows renormalized before the
feature products, so padding cannot leak values; a row whose entire
support is unobserved falls back to its unscaled weights, which keeps
an identity alignment an exact pass-through (downstream consumers see
its zero observed fraction and mask it anyway).
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .tensor import Parameter, Tensor

__all__ = [
    "ScoreNetwork",
    "WarpLayer",
    "apply_warp",
    "identity_alignment",
    "segment_boundaries",
    "time_bin_transform",
    "transform_matrix",
    "warping_curve",
]

CURVE_EPS = 1e-8
ROW_EPS = 1e-12

WARP_MODES = ("adaptive", "identity", "no_upsample", "hourly")


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ScoreNetwork:
    """Two-layer perceptron scoring how much curve length a position earns."""

    def __init__(self, rng, dim: int, prefix: str):
        self.w1 = Parameter(f"{prefix}.score.w1", _uniform(rng, dim, (dim, dim)))
        self.b1 = Parameter(f"{prefix}.score.b1", np.zeros(dim))
        self.w2 = Parameter(f"{prefix}.score.w2", _uniform(rng, dim, (dim, 1)))
        self.b2 = Parameter(f"{prefix}.score.b2", np.zeros(1))

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, hidden, mask) -> Tensor:
        """sigmoid(FC(relu(FC(H)))) * M, shape (..., K, L), in [0, 1)."""
        h = tt.maximum(tt.linear(hidden, self.w1, self.b1), 0.0)
        raw = tt.sigmoid(tt.linear(h, self.w2, self.b2))
        return tt.squeeze(raw, raw.ndim - 1) * tt.as_tensor(mask)


def warping_curve(scores) -> Tensor:
    """Normalized running score mass, non-decreasing with last value ~1.

    Rows whose scores sum to zero (fully unobserved variates) fall back
    to the uniform curve i/L so downstream geometry stays well formed.
    """
    s = tt.as_tensor(scores)
    L = s.shape[-1]
    total = tt.tsum(s, axis=-1, keepdims=True)
    lam = tt.cumsum(s, axis=-1) / (total + CURVE_EPS)
    dead = (total.data == 0.0).astype(np.float64)
    if dead.any():
        uniform = np.arange(1, L + 1, dtype=np.float64) / L
        lam = lam * (1.0 - dead) + Tensor(np.broadcast_to(uniform, lam.shape) * dead)
    return lam


def segment_boundaries(new_length: int) -> tuple[np.ndarray, np.ndarray]:
    """Left/right edges of ``new_length`` equal segments of [0, 1]."""
    if new_length < 1:
        raise ValueError(f"segment_boundaries: need new_length >= 1, got {new_length}")
    edges = np.arange(new_length + 1, dtype=np.float64) / new_length
    return edges[:-1], edges[1:]


def transform_matrix(
    curve,
    new_length: int,
    upsample: bool = True,
    adjusted_soft: bool = False,
) -> Tensor:
    """Alignment matrix (..., new_length, L_old) from a warping curve.

    ``upsample=False`` skips the boundary-stretching rescue, leaving
    empty rows all-zero.  ``adjusted_soft=True`` computes the soft
    weights against the stretched boundaries instead of the raw ones,
    which makes boundary copies uniform rather than distance-weighted.
    """
    lam = tt.as_tensor(curve)
    r1, r2 = segment_boundaries(new_length)
    ld = lam.data[..., None, :]  # (..., 1, L_old) values, detached
    R1 = r1[:, None]
    R2 = r2[:, None]
    if upsample:
        # stretch each empty segment to the nearest curve value per side
        below = np.where(R2 - ld >= 0.0, ld, 0.0)
        r1_adj = np.minimum(R1, below.max(axis=-1, keepdims=True))
        above = np.where(ld - R1 >= 0.0, ld, 0.0)
        above = np.where(above > 0.0, above, np.inf)
        r2_cand = above.min(axis=-1, keepdims=True)
        r2_cand = np.where(np.isfinite(r2_cand), r2_cand, R2)
        r2_adj = np.maximum(R2, r2_cand)
    else:
        shape = ld.shape[:-2] + (new_length, 1)
        r1_adj = np.broadcast_to(R1, shape)
        r2_adj = np.broadcast_to(R2, shape)
    hard = ((ld - r1_adj >= 0.0) & (r2_adj - ld >= 0.0)).astype(np.float64)

    lam_e = tt.expand_dims(lam, lam.ndim - 1)  # (..., 1, L_old), differentiable
    b1 = r1_adj if adjusted_soft else R1
    b2 = r2_adj if adjusted_soft else R2
    weights = tt.maximum(lam_e - b1, 0.0) + tt.maximum(b2 - lam_e, 0.0)
    soft = Tensor(hard) * weights
    rowsum = tt.tsum(soft, axis=-1, keepdims=True)
    guard = Tensor((rowsum.data == 0.0) * ROW_EPS)
    return soft / (rowsum + guard)


def identity_alignment(lead_shape, length: int) -> Tensor:
    """Constant identity alignment of shape (*lead_shape, length, length)."""
    eye = np.eye(length)
    return Tensor(np.broadcast_to(eye, tuple(lead_shape) + (length, length)).copy())


def time_bin_transform(times, mask, new_length: int) -> Tensor:
    """Fixed equal-width time binning (the non-adaptive baseline).

    Bins span [min T, max T] per variate row; observations inside a bin
    share uniform weight and empty bins stay all-zero.  Constant: no
    gradient flows anywhere.
    """
    if new_length < 1:
        raise ValueError(f"time_bin_transform: need new_length >= 1, got {new_length}")
    t = np.asarray(times, dtype=np.float64)
    lo = t.min(axis=-1, keepdims=True)
    hi = t.max(axis=-1, keepdims=True)
    width = (hi - lo) / new_length
    safe = np.where(width > 0.0, width, 1.0)
    bins = np.clip(((t - lo) / safe).astype(np.int64), 0, new_length - 1)
    bins = np.where(np.broadcast_to(width > 0.0, bins.shape), bins, 0)
    hard = (bins[..., None, :] == np.arange(new_length)[:, None]).astype(np.float64)
    rowsum = hard.sum(axis=-1, keepdims=True)
    return Tensor(hard / np.where(rowsum == 0.0, 1.0, rowsum))


def apply_warp(alignment, hidden, mask, times):
    """Contract an alignment against features, mask and times.

    Returns (Z, M', T'): warped features (..., K, L_new, D), observed
    fraction per output slot from the *unscaled* alignment, and the
    anchor time per output slot from the column-masked alignment.
    """
    A = tt.as_tensor(alignment)
    H = tt.as_tensor(hidden)
    m = tt.as_tensor(mask)
    t = tt.as_tensor(times)
    scaled = A * tt.expand_dims(m, m.ndim - 1)
    rowsum = tt.tsum(scaled, axis=-1, keepdims=True)
    dead = (rowsum.data == 0.0).astype(np.float64)
    denom = rowsum + Tensor(dead)  # dead rows divide by 1, live rows by the true mass
    effective = scaled / denom + A * Tensor(dead)
    warped = tt.matmul_batch(effective, H)
    observed_fraction = tt.matmul_batch(A, m)
    anchors = tt.matmul_batch(effective, t)
    return warped, observed_fraction, anchors


class WarpLayer:
    """One re-gridding stage: scores -> curve -> alignment -> contraction."""

    def __init__(
        self,
        rng,
        dim: int,
        mode: str = "adaptive",
        adjusted_soft: bool = False,
        prefix: str = "warp",
    ):
        if mode not in WARP_MODES:
            raise ValueError(f"warp mode must be one of {WARP_MODES}, got {mode!r}")
        self.mode = mode
        self.adjusted_soft = adjusted_soft
        self.scorer = ScoreNetwork(rng, dim, prefix) if mode in ("adaptive", "no_upsample") else None

    def parameters(self) -> list[Parameter]:
        return self.scorer.parameters() if self.scorer is not None else []

    def forward(self, hidden, mask, times, new_length: int):
        """Returns (Z, M', T', A).  ``new_length`` is ignored by the
        identity mode, which keeps the input grid."""
        if new_length < 1:
            raise ValueError(f"warp layer: new_length must be >= 1, got {new_length}")
        m = tt.as_tensor(mask)
        if self.mode == "identity":
            A = identity_alignment(m.shape[:-1], m.shape[-1])
        elif self.mode == "hourly":
            A = time_bin_transform(tt.as_tensor(times).data, m.data, new_length)
        else:
            scores = self.scorer(hidden, m)
            curve = warping_curve(scores)
            A = transform_matrix(
                curve,
                new_length,
                upsample=(self.mode != "no_upsample"),
                adjusted_soft=self.adjusted_soft,
            )
        warped, frac, anchors = apply_warp(A, hidden, m, times)
        return warped, frac, anchors, A

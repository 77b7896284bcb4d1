"""Built-in synthetic tasks with controlled multi-granularity structure.

The flagship task is *two-variate parity*: one variate is sampled
densely and carries a step trend (its mean level shifts halfway through
the horizon), the other is sampled an order of magnitude more sparsely
and carries a single signed spike.  The label is the XOR of "trend
points up" and "spike points up", so a classifier must read a coarse
feature of the dense series and a fine feature of the sparse series at
the same time.  Observation times come from per-variate renewal
processes whose mean gaps are drawn from disjoint ranges, which locks
in the density contrast between the two series.

A second task, *running sign*, labels every slot of the union grid with
the sign of the most recent dense observation; it exists to exercise
step-level classification heads.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import GridInstance, build_grid, write_dataset

__all__ = ["GeneratorSpec", "generate_instance", "generate_dataset", "write_splits"]

KINDS = ("parity", "running_sign")


@dataclass
class GeneratorSpec:
    version: str = "parity-v3"
    kind: str = "parity"
    horizon: float = 24.0
    dense_gap_range: tuple = (0.35, 0.6)    # exponential mean gap, per instance
    sparse_gap_range: tuple = (5.5, 7.5)    # gamma mean gap, per instance
    sparse_gap_shape: float = 3.0
    base_level_sd: float = 0.5
    trend_step_range: tuple = (0.8, 1.6)
    dense_noise: float = 3.0
    spike_magnitude: float = 3.0
    sparse_noise: float = 0.4
    spike_up_prob: float = 0.65

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        for name in ("dense_gap_range", "sparse_gap_range", "trend_step_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi")
        if self.sparse_gap_shape <= 0 or self.spike_magnitude <= 0:
            raise ValueError("sparse_gap_shape and spike_magnitude must be positive")
        if not 0.0 < self.spike_up_prob < 1.0:
            raise ValueError("spike_up_prob must lie strictly inside (0, 1)")
        if self.dense_gap_range[1] * 4 > self.horizon:
            raise ValueError("horizon too short for the dense gap range")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for name in ("dense_gap_range", "sparse_gap_range", "trend_step_range"):
            out[name] = list(getattr(self, name))
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "GeneratorSpec":
        raw = dict(raw)
        for name in ("dense_gap_range", "sparse_gap_range", "trend_step_range"):
            if name in raw:
                raw[name] = tuple(float(x) for x in raw[name])
        return cls(**raw)


def _renewal_times(rng, horizon: float, mean_gap: float, shape=None,
                   minimum: int = 1) -> np.ndarray:
    """Arrival times of a renewal process truncated to (0, horizon)."""
    while True:
        t = 0.0
        out = []
        while True:
            if shape is None:
                t += rng.exponential(mean_gap)
            else:
                t += rng.gamma(shape, mean_gap / shape)
            if t >= horizon:
                break
            out.append(t)
        if len(out) >= minimum:
            return np.array(out)


def generate_instance(spec: GeneratorSpec, rng, instance_id: str):
    """Returns (grid, info); ``info`` records the latent bits."""
    dense_gap = rng.uniform(*spec.dense_gap_range)
    sparse_gap = rng.uniform(*spec.sparse_gap_range)
    t_dense = _renewal_times(rng, spec.horizon, dense_gap, minimum=4)
    t_sparse = _renewal_times(rng, spec.horizon, sparse_gap,
                              shape=spec.sparse_gap_shape, minimum=2)
    base = rng.normal(scale=spec.base_level_sd)
    v_dense = base + rng.normal(scale=spec.dense_noise, size=t_dense.size)
    v_sparse = rng.normal(scale=spec.sparse_noise, size=t_sparse.size)

    if spec.kind == "parity":
        trend_up = int(rng.integers(2))
        step = rng.uniform(*spec.trend_step_range) * (1.0 if trend_up else -1.0)
        v_dense = v_dense + step * (t_dense >= spec.horizon / 2.0)
        # a biased spike prior leaves the label balanced (the trend coin is
        # fair) but makes the trend bit alone worth |2p-1| of signal, which
        # gives optimization a smooth path into the joint structure
        spike_up = int(rng.random() < spec.spike_up_prob)
        j = int(rng.integers(t_sparse.size))
        v_sparse[j] += spec.spike_magnitude * (1.0 if spike_up else -1.0)
        label = trend_up ^ spike_up
        info = {"trend_up": trend_up, "spike_up": spike_up,
                "spike_time": float(t_sparse[j]), "label": label}
        labels = [label]
    else:  # running_sign: per-step state tracking
        union = np.array(sorted(set(t_dense) | set(t_sparse)))
        labels = np.full(union.size, -1, dtype=np.int64)
        last = None
        dense_at = {float(t): float(v) for t, v in zip(t_dense, v_dense)}
        for idx, t in enumerate(union):
            if float(t) in dense_at:
                last = dense_at[float(t)]
            if last is not None:
                labels[idx] = int(last > 0)
        info = {"label": labels.copy()}

    grid = build_grid(
        [list(zip(t_dense, v_dense)), list(zip(t_sparse, v_sparse))],
        num_variates=2, instance_id=instance_id, labels=labels,
    )
    return grid, info


def generate_dataset(spec: GeneratorSpec, rng, count: int,
                     prefix: str = "inst") -> list:
    spec.validate()
    return [generate_instance(spec, rng, f"{prefix}{i:05d}")[0]
            for i in range(count)]


def write_splits(spec: GeneratorSpec, out_dir, counts: dict, seed: int) -> dict:
    """Write one dataset file per split plus the resolved spec as JSON.

    ``counts`` maps split name (train/val/test) to instance count.  Every
    split draws from one seeded stream, so a fixed seed pins all files.
    """
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = {}
    for split, count in counts.items():
        instances = generate_dataset(spec, rng, int(count), prefix=f"{split}_")
        path = out / f"{split}.txt"
        write_dataset(path, instances, num_variates=2)
        paths[split] = path
    meta = {"spec": spec.to_dict(), "seed": int(seed),
            "counts": {k: int(v) for k, v in counts.items()}}
    spec_path = out / "generator.json"
    spec_path.write_text(json.dumps(meta, indent=2) + "\n")
    paths["spec"] = spec_path
    return paths

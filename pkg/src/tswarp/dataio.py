"""Event-tuple datasets and their dense grid form.

An instance is a set of per-variate event lists (time, value).  For the
model it is flattened onto the union of observation timestamps: value,
variate-id and mask matrices of shape (K, L) over a shared ascending
time vector of length L.  Timestamps are compared exactly; nothing is
binned or averaged here.

File format (one instance per line, documented in the README):

    variates=<K>
    <instance_id>|<label[,label...]>|<k>,<t>,<v>;<k>,<t>,<v>;...

Variate ids are 1-based.  Per variate, times must be strictly
increasing; triples from different variates may interleave.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DatasetFormatError",
    "GridInstance",
    "NormalizationStats",
    "build_grid",
    "grid_to_events",
    "load_dataset",
    "write_dataset",
    "fit_normalization",
    "apply_normalization",
    "batch",
]


class DatasetFormatError(ValueError):
    pass


@dataclass
class GridInstance:
    """One instance on the union grid of its observation times."""

    instance_id: str
    values: np.ndarray  # (K, L) float, 0 where unobserved
    types: np.ndarray  # (K, L) int, variate id k+1 where observed else 0
    mask: np.ndarray  # (K, L) float 0/1
    times: np.ndarray  # (L,) ascending, shared by all variates
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def num_variates(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


def build_grid(events, num_variates: int, instance_id: str = "", labels=None) -> GridInstance:
    """Flatten per-variate (time, value) lists onto the union time grid.

    ``events`` is a sequence of ``num_variates`` lists of (t, v) pairs.
    Times within one variate must be strictly increasing; the union grid
    keeps every distinct timestamp exactly once (exact float equality).
    """
    if len(events) != num_variates:
        raise DatasetFormatError(
            f"expected {num_variates} variate lists, got {len(events)}"
        )
    for k, series in enumerate(events):
        ts = [t for t, _ in series]
        for a, b in zip(ts, ts[1:]):
            if b == a:
                raise DatasetFormatError(
                    f"duplicate time {a!r} within variate {k + 1}"
                )
            if b < a:
                raise DatasetFormatError(
                    f"times not increasing within variate {k + 1}: {a!r} then {b!r}"
                )
    union = sorted({t for series in events for t, _ in series})
    times = np.array(union, dtype=np.float64)
    index = {t: j for j, t in enumerate(union)}
    L = len(union)
    values = np.zeros((num_variates, L))
    types = np.zeros((num_variates, L), dtype=np.int64)
    mask = np.zeros((num_variates, L))
    for k, series in enumerate(events):
        for t, v in series:
            j = index[t]
            values[k, j] = v
            types[k, j] = k + 1
            mask[k, j] = 1.0
    lab = np.asarray([] if labels is None else labels, dtype=np.int64)
    return GridInstance(instance_id, values, types, mask, times, lab)


def grid_to_events(grid: GridInstance):
    """Inverse of build_grid for round-trip checks."""
    out = []
    for k in range(grid.num_variates):
        obs = grid.mask[k] > 0
        out.append(list(zip(grid.times[obs].tolist(), grid.values[k, obs].tolist())))
    return out


# ---------------------------------------------------------------------------
# line-record files
# ---------------------------------------------------------------------------


def load_dataset(path) -> tuple[list[GridInstance], int]:
    """Read a dataset file; returns (instances, K)."""
    path = Path(path)
    instances = []
    num_variates = None
    seen_ids = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if num_variates is None:
                if not line.startswith("variates="):
                    raise DatasetFormatError(
                        f"{path}:{lineno}: expected 'variates=<K>' header, got {line!r}"
                    )
                num_variates = int(line.split("=", 1)[1])
                if num_variates < 1:
                    raise DatasetFormatError(f"{path}:{lineno}: K must be >= 1")
                continue
            parts = line.split("|")
            if len(parts) != 3:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected 3 '|'-separated fields, got {len(parts)}"
                )
            inst_id, label_field, event_field = parts
            inst_id = inst_id.strip()
            if not inst_id:
                raise DatasetFormatError(f"{path}:{lineno}: empty instance id")
            if inst_id in seen_ids:
                raise DatasetFormatError(f"{path}:{lineno}: duplicate instance id {inst_id!r}")
            seen_ids.add(inst_id)
            try:
                labels = [int(x) for x in label_field.split(",")] if label_field else []
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: bad label field: {exc}") from None
            events = [[] for _ in range(num_variates)]
            if event_field:
                for chunk in event_field.split(";"):
                    bits = chunk.split(",")
                    if len(bits) != 3:
                        raise DatasetFormatError(
                            f"{path}:{lineno}: event triple {chunk!r} is malformed"
                        )
                    try:
                        k = int(bits[0])
                        t = float(bits[1])
                        v = float(bits[2])
                    except ValueError as exc:
                        raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
                    if not (1 <= k <= num_variates):
                        raise DatasetFormatError(
                            f"{path}:{lineno}: variate id {k} outside 1..{num_variates}"
                        )
                    events[k - 1].append((t, v))
            try:
                instances.append(build_grid(events, num_variates, inst_id, labels))
            except DatasetFormatError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
    if num_variates is None:
        raise DatasetFormatError(f"{path}: missing 'variates=<K>' header")
    return instances, num_variates


def write_dataset(path, instances, num_variates: int) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"variates={num_variates}\n")
        for inst in instances:
            labels = ",".join(str(int(x)) for x in np.atleast_1d(inst.labels))
            chunks = []
            for k in range(inst.num_variates):
                for j in range(inst.length):
                    if inst.mask[k, j] > 0:
                        chunks.append(
                            f"{k + 1},{float(inst.times[j])!r},{float(inst.values[k, j])!r}"
                        )
            fh.write(f"{inst.instance_id}|{labels}|{';'.join(chunks)}\n")


# ---------------------------------------------------------------------------
# per-variate standardization
# ---------------------------------------------------------------------------


@dataclass
class NormalizationStats:
    mean: np.ndarray  # (K,)
    std: np.ndarray  # (K,)

    def save_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["variate", "mean", "std"])
            for k, (m, s) in enumerate(zip(self.mean, self.std), start=1):
                w.writerow([k, repr(float(m)), repr(float(s))])

    @classmethod
    def load_csv(cls, path) -> "NormalizationStats":
        means, stds = [], []
        with Path(path).open("r", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                means.append(float(row["mean"]))
                stds.append(float(row["std"]))
        return cls(np.array(means), np.array(stds))


def fit_normalization(instances, num_variates: int) -> NormalizationStats:
    """Per-variate mean/std over observed entries of the given split.

    Variates with no observations or with a degenerate spread keep
    std = 1 so the transform stays invertible.
    """
    mean = np.zeros(num_variates)
    std = np.ones(num_variates)
    for k in range(num_variates):
        vals = np.concatenate(
            [inst.values[k][inst.mask[k] > 0] for inst in instances]
        ) if instances else np.zeros(0)
        if vals.size:
            mean[k] = vals.mean()
            s = vals.std()
            std[k] = s if s > 1e-8 else 1.0
    return NormalizationStats(mean, std)


def apply_normalization(instances, stats: NormalizationStats) -> list[GridInstance]:
    """Standardize observed values; unobserved slots stay exactly 0."""
    out = []
    for inst in instances:
        vals = inst.values.copy()
        for k in range(inst.num_variates):
            obs = inst.mask[k] > 0
            vals[k, obs] = (vals[k, obs] - stats.mean[k]) / stats.std[k]
        out.append(
            GridInstance(inst.instance_id, vals, inst.types, inst.mask, inst.times, inst.labels)
        )
    return out


# ---------------------------------------------------------------------------
# padded batches
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    values: np.ndarray  # (B, K, L)
    types: np.ndarray  # (B, K, L) int
    mask: np.ndarray  # (B, K, L)
    times: np.ndarray  # (B, L)
    lengths: np.ndarray  # (B,) true lengths
    labels: np.ndarray  # (B,) or (B, L) or (B, C) depending on the task
    label_mask: np.ndarray  # (B, L) for per-step labels, else (B,) of ones
    instance_ids: list


def batch(instances, pad_to: int | None = None, per_step: bool = False) -> Batch:
    """Stack instances, padding time with fully masked columns.

    Padded columns carry value 0, type 0, mask 0 and repeat the
    instance's last real timestamp so downstream time features see a
    constant tail.  With ``per_step`` the labels align with timesteps
    and padded steps get label -1 plus a zero label mask.
    """
    if not instances:
        raise ValueError("batch: empty instance list")
    K = instances[0].num_variates
    for inst in instances:
        if inst.num_variates != K:
            raise ValueError("batch: mixed variate counts")
    max_len = max(inst.length for inst in instances)
    L = max_len if pad_to is None else pad_to
    if L < max_len:
        raise ValueError(f"batch: pad_to={L} below longest instance {max_len}")
    B = len(instances)
    values = np.zeros((B, K, L))
    types = np.zeros((B, K, L), dtype=np.int64)
    mask = np.zeros((B, K, L))
    times = np.zeros((B, L))
    lengths = np.zeros(B, dtype=np.int64)
    for i, inst in enumerate(instances):
        n = inst.length
        lengths[i] = n
        values[i, :, :n] = inst.values
        types[i, :, :n] = inst.types
        mask[i, :, :n] = inst.mask
        times[i, :n] = inst.times
        times[i, n:] = inst.times[-1] if n else 0.0
    if per_step:
        labels = np.full((B, L), -1, dtype=np.int64)
        label_mask = np.zeros((B, L))
        for i, inst in enumerate(instances):
            lab = np.atleast_1d(inst.labels)
            if lab.size != inst.length:
                raise ValueError(
                    f"batch: instance {inst.instance_id!r} has {lab.size} step labels "
                    f"for length {inst.length}"
                )
            labels[i, : lab.size] = lab
            label_mask[i, : lab.size] = 1.0
    else:
        widths = {np.atleast_1d(inst.labels).size for inst in instances}
        if len(widths) != 1:
            raise ValueError(f"batch: inconsistent label widths {sorted(widths)}")
        width = widths.pop()
        if width <= 1:
            labels = np.array(
                [int(np.atleast_1d(inst.labels)[0]) if np.atleast_1d(inst.labels).size else -1
                 for inst in instances],
                dtype=np.int64,
            )
        else:
            labels = np.stack([np.atleast_1d(inst.labels) for inst in instances]).astype(np.int64)
        label_mask = np.ones(B)
    return Batch(values, types, mask, times, lengths, labels, label_mask,
                 [inst.instance_id for inst in instances])

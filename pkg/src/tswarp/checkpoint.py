"""Checkpoint persistence.

A checkpoint is one ``.npz`` archive holding every model parameter,
the optimizer moments, per-variate normalization statistics, and a
JSON blob with the model configuration plus free-form metadata.  A
``norm_stats.csv`` sidecar is written next to the archive so the
statistics stay human-readable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataio import NormalizationStats
from .model import ModelConfig, MultiScaleModel
from .optim import AdamState

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, model: MultiScaleModel, norm_stats: NormalizationStats,
                    adam: AdamState | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for name, p in model.registry().items():
        arrays[f"param/{name}"] = p.data
    if adam is not None:
        arrays["adam_step"] = np.array(adam.step, dtype=np.int64)
        for name, m in adam.m.items():
            arrays[f"adam_m/{name}"] = m
        for name, v in adam.v.items():
            arrays[f"adam_v/{name}"] = v
    arrays["norm_mean"] = np.asarray(norm_stats.mean, dtype=np.float64)
    arrays["norm_std"] = np.asarray(norm_stats.std, dtype=np.float64)
    meta = {"config": model.config.to_dict(), "extra": extra or {}}
    arrays["meta_json"] = np.array(json.dumps(meta))
    np.savez(path, **arrays)
    saved = path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")
    norm_stats.save_csv(saved.parent / "norm_stats.csv")
    return saved


def load_checkpoint(path):
    """Returns (model, norm_stats, adam_or_None, extra)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        keys = set(archive.files)
        if "meta_json" not in keys:
            raise CheckpointError(f"{path} is not a model checkpoint (no metadata)")
        meta = json.loads(str(archive["meta_json"][()]))
        config = ModelConfig.from_dict(meta["config"])
        model = MultiScaleModel(config, np.random.default_rng(0))
        registry = model.registry()
        for name, param in registry.items():
            key = f"param/{name}"
            if key not in keys:
                raise CheckpointError(f"checkpoint missing parameter {name!r}")
            stored = archive[key]
            if stored.shape != param.data.shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {stored.shape}, "
                    f"expected {param.data.shape}")
            param.data = stored.astype(np.float64)
        stray = [k for k in keys if k.startswith("param/")
                 and k[len("param/"):] not in registry]
        if stray:
            raise CheckpointError(f"checkpoint holds unknown parameters: {stray}")
        norm = NormalizationStats(mean=archive["norm_mean"], std=archive["norm_std"])
        adam = None
        if "adam_step" in keys:
            adam = AdamState(step=int(archive["adam_step"][()]))
            for k in keys:
                if k.startswith("adam_m/"):
                    adam.m[k[len("adam_m/"):]] = archive[k]
                elif k.startswith("adam_v/"):
                    adam.v[k[len("adam_v/"):]] = archive[k]
        return model, norm, adam, meta.get("extra", {})

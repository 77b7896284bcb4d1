"""Key-value config files for model, training, and generator settings.

Files use INI syntax with three optional sections::

    [model]      everything in ModelConfig (scales as a comma list)
    [train]      everything in TrainConfig
    [generator]  GeneratorSpec fields plus train/val/test instance counts

Unknown keys are rejected so typos fail loudly instead of silently
falling back to defaults.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .model import ModelConfig
from .synthetic import GeneratorSpec
from .train import TrainConfig

__all__ = [
    "ConfigError", "read_config", "model_config_from_file",
    "train_config_from_file", "generator_spec_from_file",
]


class ConfigError(ValueError):
    pass


_MODEL_KEYS = {
    "num_variates": int, "num_classes": int, "dim": int, "heads": int,
    "attn_layers": int, "scales": "floats", "task": str, "warp_mode": str,
    "adjusted_soft": bool, "use_value": bool, "use_type": bool,
    "use_abs_time": bool, "use_rel_time": bool, "time_scale": float,
    "dropout": float, "head_width": int, "reference_length": int,
}
_TRAIN_KEYS = {
    "lr": float, "max_epochs": int, "patience": int, "batch_size": int,
    "seed": int, "out_dir": str, "selection_metric": str,
}
_GENERATOR_KEYS = {
    "version": str, "kind": str, "horizon": float,
    "dense_gap_range": "floats", "sparse_gap_range": "floats",
    "sparse_gap_shape": float, "base_level_sd": float,
    "trend_step_range": "floats", "dense_noise": float,
    "spike_magnitude": float, "sparse_noise": float, "spike_up_prob": float,
    "train_count": int, "val_count": int, "test_count": int,
}


def read_config(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parser


def _parse_section(parser, section: str, schema: dict, path) -> dict:
    if section not in parser:
        return {}
    out = {}
    for key, raw in parser[section].items():
        if key not in schema:
            raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
        kind = schema[key]
        try:
            if kind == "floats":
                out[key] = tuple(float(x) for x in raw.replace(",", " ").split())
            elif kind is bool:
                out[key] = parser[section].getboolean(key)
            else:
                out[key] = kind(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"{path}: bad value {raw!r} for {key!r} in [{section}]") from exc
    return out


def model_config_from_file(path, num_variates: int | None = None) -> ModelConfig:
    """Build a ModelConfig from [model]; data-derived variate counts win."""
    parser = read_config(path)
    fields = _parse_section(parser, "model", _MODEL_KEYS, path)
    if num_variates is not None:
        stated = fields.get("num_variates")
        if stated is not None and stated != num_variates:
            raise ConfigError(
                f"{path}: config says num_variates={stated} but the dataset "
                f"has {num_variates}")
        fields["num_variates"] = num_variates
    if "num_variates" not in fields:
        raise ConfigError(f"{path}: num_variates missing and no dataset given")
    if "num_classes" not in fields:
        raise ConfigError(f"{path}: [model] must set num_classes")
    try:
        return ModelConfig(**fields)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def train_config_from_file(path, out_dir=None, seed: int | None = None) -> TrainConfig:
    parser = read_config(path)
    fields = _parse_section(parser, "train", _TRAIN_KEYS, path)
    if out_dir is not None:
        fields["out_dir"] = str(out_dir)
    if seed is not None:
        fields["seed"] = int(seed)
    cfg = TrainConfig(**fields)
    cfg.validate()
    return cfg


def generator_spec_from_file(path):
    """Returns (GeneratorSpec, counts) from [generator]."""
    parser = read_config(path)
    fields = _parse_section(parser, "generator", _GENERATOR_KEYS, path)
    counts = {}
    for split in ("train", "val", "test"):
        key = f"{split}_count"
        if key in fields:
            counts[split] = fields.pop(key)
    spec = GeneratorSpec(**fields)
    spec.validate()
    return spec, counts

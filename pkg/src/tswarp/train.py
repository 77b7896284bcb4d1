"""Training loop: Adam, early stopping, history and checkpoint output.

One run owns a seeded generator tree, so initialization, shuffling and
dropout are all pinned by ``TrainConfig.seed``; two runs with the same
seed produce byte-identical histories.  Model selection keeps the
parameters from the epoch with the best validation metric (AUROC by
default, accuracy for step-level tasks) and stops after ``patience``
consecutive epochs without strict improvement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .dataio import apply_normalization, batch as make_batch, fit_normalization
from .metrics import evaluate_predictions
from .model import ModelConfig, MultiScaleModel
from .optim import AdamState, OptimizerError, adam_step, zero_grads
from .plots import render_history

__all__ = ["TrainConfig", "TrainResult", "DivergenceError", "train", "evaluate_model"]


class DivergenceError(RuntimeError):
    """Raised when optimization produces a non-finite quantity."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    max_epochs: int = 50
    patience: int = 5
    batch_size: int = 32
    seed: int = 0
    out_dir: str = "run"
    selection_metric: str = "auto"  # auto -> auroc, or accuracy for per_step

    def validate(self) -> None:
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be positive")
        if not 1 <= self.patience < self.max_epochs:
            raise ValueError("patience must satisfy 1 <= patience < max_epochs")
        if self.selection_metric not in ("auto", "auroc", "auprc", "accuracy"):
            raise ValueError(f"unknown selection metric {self.selection_metric!r}")

    def resolved_metric(self, task: str) -> str:
        if self.selection_metric != "auto":
            return self.selection_metric
        return "accuracy" if task == "per_step" else "auroc"


@dataclass
class TrainResult:
    model: MultiScaleModel
    norm_stats: object
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_value: float = float("-inf")
    checkpoint_path: Path | None = None
    summary: dict = field(default_factory=dict)


def _chunks(items, size):
    for i in range(0, len(items), size):
        yield items[i:i + size]


def evaluate_model(model: MultiScaleModel, instances, norm_stats,
                   batch_size: int = 64) -> dict:
    """Loss plus AUROC/AUPRC/accuracy over one split."""
    task = model.config.task
    per_step = task == "per_step"
    loss_total = 0.0
    weight_total = 0.0
    ys, ps = [], []
    normed = apply_normalization(instances, norm_stats)
    for chunk in _chunks(normed, batch_size):
        b = make_batch(chunk, per_step=per_step)
        out = model.forward_batch(b)
        loss = float(model.loss(out, b.labels, b.label_mask).data)
        if per_step:
            keep = b.label_mask.astype(bool)
            weight = float(keep.sum())
            ys.append(b.labels[keep])
            ps.append(out.probabilities[keep])
        else:
            weight = float(len(chunk))
            ys.append(np.asarray(b.labels))
            ps.append(out.probabilities)
        loss_total += loss * weight
        weight_total += weight
    labels = np.concatenate(ys)
    probs = np.concatenate(ps)
    report = evaluate_predictions("sequence" if per_step else task, labels, probs)
    report["loss"] = loss_total / max(weight_total, 1.0)
    return report


def _write_history_csv(history: list, path: Path) -> None:
    fields = list(history[0]) if history else ["epoch"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(v) if isinstance(v, float) else v)
                        for k, v in row.items()})


def _summary_line(summary: dict) -> str:
    parts = [f"{k}={summary[k]}" for k in summary]
    return "run_summary " + " ".join(parts)


def train(model_config: ModelConfig, train_config: TrainConfig,
          train_instances, val_instances, quiet: bool = False) -> TrainResult:
    train_config.validate()
    if not train_instances or not val_instances:
        raise ValueError("training and validation splits must be non-empty")
    out_dir = Path(train_config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    norm_stats = fit_normalization(train_instances, model_config.num_variates)
    train_set = apply_normalization(train_instances, norm_stats)
    if model_config.reference_length < 1:
        lengths = sorted(inst.length for inst in train_instances)
        model_config.reference_length = int(np.floor(np.median(lengths) + 0.5))
    model_config.validate()

    root = np.random.default_rng(train_config.seed)
    init_rng, order_rng, drop_rng = root.spawn(3)
    model = MultiScaleModel(model_config, init_rng)
    params = model.parameters()
    adam = AdamState()
    metric_name = train_config.resolved_metric(model_config.task)
    per_step = model_config.task == "per_step"

    result = TrainResult(model=model, norm_stats=norm_stats)
    best_params = None
    stale = 0
    for epoch in range(1, train_config.max_epochs + 1):
        order = order_rng.permutation(len(train_set))
        epoch_loss = 0.0
        epoch_weight = 0.0
        for b_idx, idx_chunk in enumerate(_chunks(list(order), train_config.batch_size)):
            chunk = [train_set[i] for i in idx_chunk]
            b = make_batch(chunk, per_step=per_step)
            out = model.forward_batch(b, training=True, rng=drop_rng)
            loss = model.loss(out, b.labels, b.label_mask)
            if not np.isfinite(loss.data):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {b_idx}")
            zero_grads(params)
            loss.backward()
            try:
                adam_step(params, [p.grad for p in params], adam, lr=train_config.lr)
            except OptimizerError as exc:
                raise DivergenceError(
                    f"bad gradient at epoch {epoch}, batch {b_idx}: {exc}") from exc
            epoch_loss += float(loss.data) * len(chunk)
            epoch_weight += len(chunk)

        report = evaluate_model(model, val_instances, norm_stats,
                                batch_size=train_config.batch_size)
        value = float(report[metric_name])
        row = {"epoch": epoch, "train_loss": epoch_loss / epoch_weight}
        row.update({f"val_{k}": float(v) for k, v in sorted(report.items())})
        result.history.append(row)
        if not quiet:
            print(f"epoch {epoch}: train_loss={row['train_loss']:.4f} "
                  f"val_{metric_name}={value:.4f}")

        if value > result.best_value:
            result.best_value = value
            result.best_epoch = epoch
            best_params = {p.name: p.data.copy() for p in params}
            stale = 0
        else:
            stale += 1
            if stale >= train_config.patience:
                break

    if best_params is not None:
        for p in params:
            p.data = best_params[p.name]

    result.checkpoint_path = save_checkpoint(
        out_dir / "best.npz", model, norm_stats, adam=adam,
        extra={"best_epoch": result.best_epoch,
               "best_value": result.best_value,
               "metric": metric_name,
               "seed": train_config.seed,
               "epochs_run": len(result.history)})
    _write_history_csv(result.history, out_dir / "history.csv")
    render_history(result.history, out_dir / "history.png",
                   metric_key=f"val_{metric_name}")
    result.summary = {
        "seed": train_config.seed,
        "epochs_run": len(result.history),
        "best_epoch": result.best_epoch,
        f"best_val_{metric_name}": result.best_value,
        "checkpoint": str(result.checkpoint_path),
    }
    (out_dir / "summary.txt").write_text(_summary_line(result.summary) + "\n")
    if not quiet:
        print(_summary_line(result.summary))
    return result

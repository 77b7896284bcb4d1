"""Figure rendering for training histories and alignment exports.

Everything renders through the Agg backend straight to files; nothing
here opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["render_history", "render_alignment"]


def render_history(history: list, path, metric_key: str = "val_auroc") -> Path:
    """Loss and validation-metric curves from per-epoch records."""
    path = Path(path)
    epochs = [row["epoch"] for row in history]
    losses = [row["train_loss"] for row in history]
    metric = [row.get(metric_key, float("nan")) for row in history]
    fig, (ax_loss, ax_metric) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, losses, marker="o")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_loss.grid(True, alpha=0.3)
    ax_metric.plot(epochs, metric, marker="o", color="tab:green")
    ax_metric.set_xlabel("epoch")
    ax_metric.set_ylabel(metric_key)
    ax_metric.grid(True, alpha=0.3)
    best = max(range(len(metric)), key=lambda i: metric[i]) if metric else None
    if best is not None:
        ax_metric.axvline(epochs[best], color="tab:red", ls="--", alpha=0.6)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_alignment(alignment, times_in, times_out, path, title: str = "",
                     observed=None, values=None) -> Path:
    """Heatmap of one alignment matrix plus its time-anchor mapping.

    ``observed``/``values`` optionally add a scatter of the raw input
    points under the anchor panel (useful for the first learned layer).
    """
    path = Path(path)
    fig, (ax_map, ax_anchor) = plt.subplots(
        2, 1, figsize=(7, 6), gridspec_kw={"height_ratios": [3, 2]})
    im = ax_map.imshow(alignment, aspect="auto", cmap="viridis",
                       interpolation="nearest")
    ax_map.set_xlabel("input slot")
    ax_map.set_ylabel("output slot")
    if title:
        ax_map.set_title(title)
    fig.colorbar(im, ax=ax_map, fraction=0.046)
    ax_anchor.plot(times_in, [0] * len(times_in), "|", ms=14, color="tab:blue",
                   label="input anchors")
    ax_anchor.plot(times_out, [1] * len(times_out), "|", ms=14, color="tab:orange",
                   label="output anchors")
    if observed is not None and values is not None:
        twin = ax_anchor.twinx()
        twin.plot(observed, values, ".", alpha=0.6, color="tab:gray")
        twin.set_ylabel("value")
    ax_anchor.set_yticks([0, 1])
    ax_anchor.set_yticklabels(["in", "out"])
    ax_anchor.set_xlabel("time")
    ax_anchor.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path

"""Evaluation metrics for probabilistic classifiers.

All metrics are computed from first principles on numpy arrays:
AUROC as the tie-corrected rank statistic and AUPRC as average
precision over distinct-score blocks, so tied scores are handled
exactly rather than in arrival order.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "binary_auroc", "binary_auprc", "accuracy",
    "macro_auroc", "macro_auprc", "evaluate_predictions", "summarize_runs",
]


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks; tied scores share the mean of their rank range."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def binary_auroc(labels, scores) -> float:
    """P(score of a positive > score of a negative), ties counting half.

    Returns nan when only one class is present.
    """
    y = np.asarray(labels).astype(bool).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise ValueError("labels and scores must have matching lengths")
    pos = int(y.sum())
    neg = y.size - pos
    if pos == 0 or neg == 0:
        return float("nan")
    ranks = _average_ranks(s)
    return float((ranks[y].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


def binary_auprc(labels, scores) -> float:
    """Average precision accumulated over blocks of equal score."""
    y = np.asarray(labels).astype(bool).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise ValueError("labels and scores must have matching lengths")
    total_pos = int(y.sum())
    if total_pos == 0:
        return float("nan")
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    ap = 0.0
    tp = fp = 0
    i = 0
    n = y.size
    while i < n:
        j = i
        while j + 1 < n and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        block_tp = int(y_sorted[i:j + 1].sum())
        tp += block_tp
        fp += (j - i + 1) - block_tp
        if block_tp:
            ap += (block_tp / total_pos) * (tp / (tp + fp))
        i = j + 1
    return float(ap)


def accuracy(labels, predictions) -> float:
    y = np.asarray(labels).ravel()
    p = np.asarray(predictions).ravel()
    if y.shape != p.shape:
        raise ValueError("labels and predictions must have matching lengths")
    if y.size == 0:
        return float("nan")
    return float(np.mean(y == p))


def _macro(metric, labels: np.ndarray, scores: np.ndarray) -> float:
    """Mean of a binary metric over columns where it is defined."""
    vals = [metric(labels[:, c], scores[:, c]) for c in range(labels.shape[1])]
    vals = [v for v in vals if not np.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def macro_auroc(labels, scores) -> float:
    return _macro(binary_auroc, np.asarray(labels), np.asarray(scores))


def macro_auprc(labels, scores) -> float:
    return _macro(binary_auprc, np.asarray(labels), np.asarray(scores))


def evaluate_predictions(task: str, labels, probabilities, label_mask=None) -> dict:
    """AUROC / AUPRC / accuracy for one evaluation split.

    ``labels``: ints (sequence, per_step) or a 0/1 matrix (multi_label).
    ``probabilities``: class probabilities as produced by the model.
    ``label_mask`` selects the scored steps for per-step tasks.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    if task == "per_step":
        if label_mask is None:
            label_mask = np.ones(y.shape)
        keep = np.asarray(label_mask).astype(bool)
        probs = probs[keep]
        y = y[keep]
        task = "sequence"
    if task == "sequence":
        if probs.ndim != 2:
            raise ValueError(f"expected (N, C) probabilities, got {probs.shape}")
        classes = probs.shape[1]
        preds = probs.argmax(axis=-1)
        if classes == 2:
            roc = binary_auroc(y == 1, probs[:, 1])
            prc = binary_auprc(y == 1, probs[:, 1])
        else:
            onehot = np.eye(classes)[y.astype(int)]
            roc = macro_auroc(onehot, probs)
            prc = macro_auprc(onehot, probs)
        return {"auroc": roc, "auprc": prc, "accuracy": accuracy(y, preds)}
    if task == "multi_label":
        preds = (probs >= 0.5).astype(int)
        return {
            "auroc": macro_auroc(y, probs),
            "auprc": macro_auprc(y, probs),
            "accuracy": accuracy(y.ravel(), preds.ravel()),
        }
    raise ValueError(f"unknown task {task!r}")


def summarize_runs(results: list) -> dict:
    """Mean and standard deviation of each metric across repeated runs."""
    if not results:
        raise ValueError("no results to summarize")
    keys = sorted(results[0])
    out = {}
    for key in keys:
        vals = np.array([float(r[key]) for r in results])
        out[f"{key}_mean"] = float(np.nanmean(vals))
        out[f"{key}_std"] = float(np.nanstd(vals))
    return out

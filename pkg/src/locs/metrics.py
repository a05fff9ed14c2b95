"""Forecast error curves and relation-recovery F1."""
from __future__ import annotations

import numpy as np

AGGREGATION = "mean over scenes of per-scene node-averaged errors"


def error_curves(pred, truth, dim: int) -> dict[str, np.ndarray]:
    """Per-step errors for ``[S, H, N, 2D]`` predictions against ground truth.

    ``mse`` averages squared error over nodes and all ``2D`` state
    components; ``l2_pos`` and ``l2_vel`` are node-averaged Euclidean errors.
    Each is computed per scene, then averaged over scenes.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.ndim != 4 or pred.shape[-1] != 2 * dim:
        raise ValueError(f"expected [S, H, N, {2 * dim}] arrays, got {pred.shape}")
    diff = pred - truth
    return {
        "mse": (diff ** 2).mean(axis=(2, 3)).mean(0),
        "l2_pos": np.linalg.norm(diff[..., :dim], axis=-1).mean(2).mean(0),
        "l2_vel": np.linalg.norm(diff[..., dim:], axis=-1).mean(2).mean(0),
    }


def confusion_counts(predicted, labels) -> tuple[int, int, int]:
    """``(TP, FP, FN)`` of binary ``[..., N, N]`` edge maps, ignoring the diagonal."""
    predicted = np.asarray(predicted).astype(bool)
    labels = np.asarray(labels).astype(bool)
    if predicted.shape != labels.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {labels.shape}")
    n = labels.shape[-1]
    off = ~np.eye(n, dtype=bool)
    p, t = predicted & off, labels & off
    return int((p & t).sum()), int((p & ~t).sum()), int((~p & t).sum())


def f1_score_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def f1_relations(predicted, labels, no_edge_type: int = 0) -> float:
    """F1 of the interaction-present class over all directed pairs and timesteps.

    ``predicted`` is either a binary ``[..., N, N]`` map or per-type scores
    ``[..., N, N, K]``; with scores an edge counts as present when its argmax
    is not ``no_edge_type``.
    """
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.ndim == labels.ndim + 1:
        predicted = predicted.argmax(-1) != no_edge_type
    return f1_score_from_counts(*confusion_counts(predicted, labels))

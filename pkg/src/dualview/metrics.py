"""Accuracy, rank-based ROC AUC and the ROC staircase."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def predict_labels(p_malignant) -> np.ndarray:
    """Class 1 only when strictly more likely; p = 0.5 resolves to benign."""
    return (np.asarray(p_malignant, dtype=np.float64) > 0.5).astype(int)


def accuracy(predictions, labels) -> float:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if predictions.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    if predictions.shape != labels.shape:
        raise ValueError(f"{predictions.size} predictions for {labels.size} labels")
    return float(np.mean(predictions == labels))


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC is undefined with a single class present")
    return scores, labels, n_pos, n_neg


def roc_auc(scores, labels) -> float:
    """Mann-Whitney U / (n_pos * n_neg) with midranks, so ties count one half."""
    scores, labels, n_pos, n_neg = _check_binary(scores, labels)
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(FPR, TPR) at every distinct threshold, from (0, 0) to (1, 1)."""
    scores, labels, n_pos, n_neg = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    # last index of each run of equal scores
    cut = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[cut]
    fp = np.cumsum(1 - y)[cut]
    return [(0.0, 0.0)] + [(f / n_neg, t / n_pos) for f, t in zip(fp, tp)]


def trapezoid_area(points) -> float:
    pts = np.asarray(points, dtype=np.float64)
    return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2))


def cross_entropy(probs, labels, floor: float = np.finfo(np.float64).tiny) -> np.ndarray:
    """Per-row negative log-probability of the true class."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    return -np.log(np.maximum(probs[np.arange(len(labels)), labels], floor))

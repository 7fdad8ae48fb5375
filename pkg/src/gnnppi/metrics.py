"""Multi-label F1 from pooled confusion counts."""

from __future__ import annotations

import numpy as np

from .data import LABELS


def _binarize(pred, labels, threshold):
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ValueError(f"prediction shape {pred.shape} != label shape {labels.shape}")
    if pred.ndim != 2 or pred.shape[0] == 0:
        raise ValueError("empty batch")
    return pred >= threshold, labels.astype(bool)


def confusion(pred, labels, threshold: float = 0.5) -> dict[str, np.ndarray]:
    """Per-label TP/FP/FN counts (each an array of length n_labels)."""
    p, y = _binarize(pred, labels, threshold)
    return {
        "tp": (p & y).sum(axis=0),
        "fp": (p & ~y).sum(axis=0),
        "fn": (~p & y).sum(axis=0),
    }


def f1_from_counts(tp, fp, fn) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def micro_f1(pred, labels, threshold: float = 0.5) -> float:
    c = confusion(pred, labels, threshold)
    return f1_from_counts(int(c["tp"].sum()), int(c["fp"].sum()), int(c["fn"].sum()))


def per_type_f1(pred, labels, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Binary F1 per label column, plus a flag marking columns with no positives at all."""
    c = confusion(pred, labels, threshold)
    denom = 2 * c["tp"] + c["fp"] + c["fn"]
    absent = denom == 0
    f1 = np.where(absent, 0.0, 2 * c["tp"] / np.maximum(denom, 1))
    return f1, absent


def label_names(n: int) -> tuple[str, ...]:
    return LABELS if n == len(LABELS) else tuple(f"label_{i}" for i in range(n))

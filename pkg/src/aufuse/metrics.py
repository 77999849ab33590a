"""Per-AU F1 scores over frames, and their macro average."""

from __future__ import annotations

import numpy as np

from aufuse.classifier import NUM_AUS


def f1_per_au(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """F1 = 2TP / (2TP + FP + FN) per AU column; 0/0 counts as 0."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] != NUM_AUS:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    pred = pred.astype(bool)
    truth = truth.astype(bool)
    tp = (pred & truth).sum(axis=0).astype(np.float64)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    denom = 2 * tp + fp + fn
    scores = np.zeros(NUM_AUS, dtype=np.float64)
    nonzero = denom > 0
    scores[nonzero] = 2 * tp[nonzero] / denom[nonzero]
    return scores


def macro_f1(per_au: np.ndarray) -> float:
    return float(np.mean(per_au))

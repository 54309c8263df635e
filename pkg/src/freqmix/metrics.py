"""DICE and Matthews correlation over binarized predictions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_counts(pred_prob, mask, threshold: float = 0.5) -> ConfusionCounts:
    pred = np.asarray(pred_prob)
    mask = np.asarray(mask)
    if pred.shape != mask.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must be binary")
    p = pred >= threshold
    m = mask.astype(bool)
    tp = int(np.count_nonzero(p & m))
    fp = int(np.count_nonzero(p & ~m))
    fn = int(np.count_nonzero(~p & m))
    return ConfusionCounts(tp, fp, int(m.size) - tp - fp - fn, fn)


def dice(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0  # both masks empty
    return 2 * c.tp / denom


def mcc(c: ConfusionCounts) -> float:
    factors = ((c.tp + c.fp), (c.tp + c.fn), (c.tn + c.fp), (c.tn + c.fn))
    if 0 in factors:
        return 0.0
    # integer products stay exact; sqrt only at the end
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(math.prod(factors))


def score(pred_prob, mask, threshold: float = 0.5) -> tuple[float, float]:
    c = confusion_counts(pred_prob, mask, threshold)
    return dice(c), mcc(c)

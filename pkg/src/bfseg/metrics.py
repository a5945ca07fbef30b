"""Confusion counting and the precision / recall / F1 / IoU metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


def binarize(logits) -> np.ndarray:
    """Building where ``logit >= 0`` (probability >= 0.5, ties to building)."""
    return (np.asarray(logits) >= 0).astype(np.uint8)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self):
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def confusion(pred, truth) -> ConfusionCounts:
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {pred.shape} vs truth {truth.shape}")
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return ConfusionCounts(tp, pred.size - tp - fp - fn, fp, fn)


def accumulate(pred, truth, acc: ConfusionCounts | None = None) -> ConfusionCounts:
    counts = confusion(pred, truth)
    return counts if acc is None else acc + counts


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    iou: float
    undefined: tuple = ()

    def to_dict(self) -> dict:
        return {
            "iou": self.iou,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "undefined": list(self.undefined),
        }

    def format(self) -> str:
        lines = [f"{k}: {100 * getattr(self, k):.2f}" for k in ("iou", "precision", "recall", "f1")]
        if self.undefined:
            lines.append("undefined: " + ",".join(self.undefined))
        return "\n".join(lines)


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def compute_metrics(c: ConfusionCounts) -> MetricsReport:
    """Precision, recall, F1 and IoU; a zero denominator gives 0 and is flagged."""
    undefined = []
    precision = _ratio(c.tp, c.tp + c.fp, "precision", undefined)
    recall = _ratio(c.tp, c.tp + c.fn, "recall", undefined)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        # tp == 0: F1 is 0 unless there is nothing at all to score
        f1 = 0.0
        if c.tp + c.fp + c.fn == 0:
            undefined.append("f1")
    iou = _ratio(c.tp, c.tp + c.fn + c.fp, "iou", undefined)
    return MetricsReport(precision, recall, f1, iou, tuple(undefined))

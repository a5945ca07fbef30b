"""Masked binary cross-entropy, lenient supervision and self-distillation.

Every loss returns its value together with the gradient w.r.t. the logits it
was computed on, so callers can feed the gradients straight into
:meth:`bfseg.model.BFSegModel.backward`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DimensionError
from .label_pyramid import DECODER_STRIDES, MaskPyramid, block_average
from .ops import sigmoid


class DeepSupervision(str, Enum):
    OFF = "off"
    CONVENTIONAL = "conventional"
    LENIENT = "lenient"


class Distillation(str, Enum):
    OFF = "off"
    LENIENT = "lenient"


@dataclass(frozen=True)
class SupervisionMode:
    deep_supervision: DeepSupervision = DeepSupervision.LENIENT
    distillation: Distillation = Distillation.LENIENT

    def __post_init__(self):
        object.__setattr__(self, "deep_supervision", DeepSupervision(self.deep_supervision))
        object.__setattr__(self, "distillation", Distillation(self.distillation))
        if self.distillation is Distillation.LENIENT and self.deep_supervision is DeepSupervision.OFF:
            raise ConfigError("distillation requires deep supervision to be enabled")

    def to_dict(self):
        return {"deep_supervision": self.deep_supervision.value, "distillation": self.distillation.value}


@dataclass
class LossBreakdown:
    final_ce: float
    lenient_per_scale: list = field(default_factory=lambda: [0.0] * 4)
    distill_per_scale: list = field(default_factory=lambda: [0.0] * 4)
    total: float = 0.0

    def to_dict(self) -> dict:
        return {
            "final_ce": self.final_ce,
            "lenient_per_scale": list(self.lenient_per_scale),
            "distill_per_scale": list(self.distill_per_scale),
            "total": self.total,
        }


def bce_with_logits(z, t):
    """Element-wise binary cross-entropy of logits ``z`` against targets ``t``.

    Uses ``max(z, 0) - z t + log(1 + exp(-|z|))``, which never overflows.
    """
    z = np.asarray(z)
    return np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))


def masked_bce(logits, targets, mask):
    """Mean BCE over the pixels where ``mask`` is 1.

    Returns ``(value, grad)``; both are exactly zero when the mask is empty.
    """
    logits = np.asarray(logits)
    if logits.shape != np.shape(targets) or logits.shape != np.shape(mask):
        raise DimensionError(
            f"shape mismatch: logits {logits.shape}, targets {np.shape(targets)}, mask {np.shape(mask)}"
        )
    m = np.asarray(mask).astype(logits.dtype)
    t = np.asarray(targets).astype(logits.dtype)
    n = float(m.sum())
    if n == 0:
        return 0.0, np.zeros_like(logits)
    value = float((bce_with_logits(logits, t) * m).sum() / n)
    grad = m * (sigmoid(logits) - t) / logits.dtype.type(n)
    return value, grad


def _check_aligned(preds, masks: MaskPyramid):
    if tuple(preds.strides) != tuple(reversed(DECODER_STRIDES)):
        raise DimensionError(f"unexpected prediction strides {preds.strides}")
    for s, z in zip(preds.strides, preds.cls):
        if s not in masks:
            raise DimensionError(f"mask pyramid has no stride {s}")
        if masks.mask(s).shape != z.shape:
            raise DimensionError(f"stride {s}: logits {z.shape} vs mask {masks.mask(s).shape}")


def lenient_supervision_loss(preds, masks: MaskPyramid, mode=DeepSupervision.LENIENT):
    """Per-scale auxiliary losses, ordered like ``preds.cls`` (coarse to fine).

    ``lenient`` ignores hybrid pixels; ``conventional`` supervises every pixel
    with the soft label rounded to the nearest class (ties to building).
    Returns ``(values, grads)``.
    """
    mode = DeepSupervision(mode)
    if mode is DeepSupervision.OFF:
        return [0.0] * 4, [None] * 4
    _check_aligned(preds, masks)
    values, grads = [], []
    for s, z in zip(preds.strides, preds.cls):
        y_down = masks.soft_label(s)
        if mode is DeepSupervision.LENIENT:
            v, g = masked_bce(z, y_down, masks.mask(s))
        else:
            v, g = masked_bce(z, (y_down >= 0.5).astype(z.dtype), np.ones(z.shape, dtype=np.uint8))
        values.append(v)
        grads.append(g)
    return values, grads


def distillation_targets(final_logits, strides=tuple(reversed(DECODER_STRIDES))):
    """Soft pseudo labels: block-averaged sigmoid of the final prediction."""
    prob = sigmoid(final_logits)
    return [block_average(prob, s) for s in strides]


def lenient_distillation_loss(preds, masks: MaskPyramid, teachers=None):
    """Self-distillation from the final prediction into every stage.

    The teacher is a constant: no gradient is returned for ``preds.final``.
    Pass ``teachers`` (as from :func:`distillation_targets`) to pin it to
    values computed elsewhere, e.g. from unperturbed parameters.
    Returns ``(values, grads)`` with grads w.r.t. ``preds.cls``.
    """
    _check_aligned(preds, masks)
    if teachers is None:
        teachers = distillation_targets(preds.final, preds.strides)
    values, grads = [], []
    for s, z, t in zip(preds.strides, preds.cls, teachers):
        v, g = masked_bce(z, t, masks.mask(s))
        values.append(v)
        grads.append(g)
    return values, grads


def total_loss(preds, masks: MaskPyramid, y, mode: SupervisionMode = SupervisionMode(), teachers=None):
    """Final-prediction BCE plus the enabled auxiliary terms.

    Returns ``(breakdown, grads)`` where ``grads`` has keys ``cls`` (list,
    coarse to fine) and ``final``. ``teachers`` is forwarded to
    :func:`lenient_distillation_loss`.
    """
    y = np.asarray(y)
    if y.shape != preds.final.shape:
        raise DimensionError(f"label {y.shape} vs prediction {preds.final.shape}")
    final_ce, d_final = masked_bce(preds.final, y, np.ones(y.shape, dtype=np.uint8))

    d_cls = [None] * 4
    lenient_vals, lenient_grads = lenient_supervision_loss(preds, masks, mode.deep_supervision)
    for i, g in enumerate(lenient_grads):
        d_cls[i] = g

    distill_vals = [0.0] * 4
    if mode.distillation is Distillation.LENIENT:
        distill_vals, distill_grads = lenient_distillation_loss(preds, masks, teachers)
        for i, g in enumerate(distill_grads):
            d_cls[i] = g if d_cls[i] is None else d_cls[i] + g

    total = final_ce
    for v in lenient_vals:
        total += v
    for v in distill_vals:
        total += v
    breakdown = LossBreakdown(final_ce, list(lenient_vals), list(distill_vals), total)
    return breakdown, {"cls": d_cls, "final": d_final}

"""Soft label downsampling and the purity mask used by lenient supervision.

A binary label ``y`` is reduced to decoder strides by exact block (area)
averaging. A downsampled pixel is *pure* when every source pixel in its
block agrees, i.e. its soft value is exactly 0 or exactly 1; everything in
between is a *hybrid* pixel and is excluded from the auxiliary losses.

All functions accept arrays with arbitrary leading (batch) dimensions; the
last two axes are height and width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

DECODER_STRIDES = (4, 8, 16, 32)
VALID_FACTORS = (1, 2, 4, 8, 16, 32)


def _check_factor(shape, f):
    if f not in VALID_FACTORS:
        raise DimensionError(f"factor must be one of {VALID_FACTORS}, got {f}")
    h, w = shape[-2:]
    if h % f or w % f:
        raise DimensionError(f"spatial size {h}x{w} is not divisible by factor {f}")


def block_sum(a: np.ndarray, f: int) -> np.ndarray:
    """Sum non-overlapping ``f x f`` blocks over the last two axes."""
    _check_factor(a.shape, f)
    h, w = a.shape[-2:]
    lead = a.shape[:-2]
    return a.reshape(*lead, h // f, f, w // f, f).sum(axis=(-3, -1))


def block_average(a: np.ndarray, f: int) -> np.ndarray:
    """Mean of non-overlapping ``f x f`` blocks over the last two axes."""
    if f == 1:
        return np.array(a, copy=True)
    return block_sum(a, f) / (f * f)


def downsample_label(y: np.ndarray, f: int) -> np.ndarray:
    """Area-downsample a binary label by ``f``.

    The block sum is taken in integer arithmetic and divided by ``f**2`` (a
    power of two), so the result is exact in float64: a value is 0.0 or 1.0
    exactly when its block is uniform.
    """
    y = np.asarray(y)
    if y.ndim < 2:
        raise DimensionError("label must be at least 2-D")
    _check_factor(y.shape, f)
    if not np.isin(y, (0, 1)).all():
        raise DomainError("label must contain only 0 and 1")
    counts = block_sum(y.astype(np.int64), f)
    return counts.astype(np.float64) / float(f * f)


def purity_mask(y_down: np.ndarray) -> np.ndarray:
    """1 where ``floor(y_down) == ceil(y_down)`` (pure pixel), else 0.

    The printed formula ``floor * ceil`` would also zero out pure background;
    the floor/ceil agreement test keeps both pure classes.
    """
    y_down = np.asarray(y_down, dtype=np.float64)
    if np.isnan(y_down).any() or (y_down < 0).any() or (y_down > 1).any():
        raise DomainError("soft label values must lie in [0, 1]")
    return (np.floor(y_down) == np.ceil(y_down)).astype(np.uint8)


@dataclass(frozen=True)
class PyramidLevel:
    stride: int
    soft_label: np.ndarray
    mask: np.ndarray

    @property
    def n_pure(self) -> int:
        return int(self.mask.sum())

    @property
    def n_hybrid(self) -> int:
        return int(self.mask.size - self.mask.sum())


class MaskPyramid(dict):
    """Mapping ``stride -> PyramidLevel`` for the decoder strides."""

    @property
    def strides(self):
        return tuple(sorted(self))

    def soft_label(self, stride: int) -> np.ndarray:
        return self[stride].soft_label

    def mask(self, stride: int) -> np.ndarray:
        return self[stride].mask


def build_mask_pyramid(y: np.ndarray, strides=DECODER_STRIDES) -> MaskPyramid:
    """Soft labels and purity masks at every decoder stride."""
    y = np.asarray(y)
    max_stride = max(strides)
    h, w = y.shape[-2:]
    if h % max_stride or w % max_stride:
        raise DimensionError(
            f"label size {h}x{w} must be divisible by the largest stride {max_stride}"
        )
    pyramid = MaskPyramid()
    for s in strides:
        y_down = downsample_label(y, s)
        pyramid[s] = PyramidLevel(s, y_down, purity_mask(y_down))
    return pyramid

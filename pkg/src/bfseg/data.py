"""Synthetic building scenes, the on-disk dataset layout, and augmentation.

Dataset layout::

    root/images/<id>.png   8-bit RGB
    root/labels/<id>.png   8-bit grayscale, 0 background / 255 building
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DatasetError, DimensionError
from .io import read_png, to_uint8, write_png
from .ops import _interp_matrix

SIZE_MULTIPLE = 32


@dataclass
class Sample:
    image: np.ndarray  # (H, W, 3) float in [0, 1]
    label: np.ndarray  # (H, W) uint8 in {0, 1}
    id: str = ""

    def __post_init__(self):
        if self.image.shape[:2] != self.label.shape:
            raise DimensionError(f"{self.id}: image {self.image.shape[:2]} vs label {self.label.shape}")


@dataclass(frozen=True)
class SynthConfig:
    size: int = 64
    count_range: tuple = (2, 6)
    size_range: tuple = (4, 20)
    noise: float = 0.06
    rotation: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "count_range", tuple(int(v) for v in self.count_range))
        object.__setattr__(self, "size_range", tuple(int(v) for v in self.size_range))
        lo, hi = self.count_range
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad count range {self.count_range}")
        lo, hi = self.size_range
        if lo < 2 or hi < lo:
            raise ConfigError(f"building sizes must satisfy 2 <= min <= max, got {self.size_range}")
        if self.size % SIZE_MULTIPLE:
            raise ConfigError(f"scene size must be a multiple of {SIZE_MULTIPLE}")
        if hi > self.size:
            raise ConfigError("buildings cannot be larger than the scene")


# --------------------------------------------------------------------------
# synthetic scenes
# --------------------------------------------------------------------------


def rasterize_rectangle(shape, center, size, angle=0.0) -> np.ndarray:
    """Pixels whose centres fall inside a (possibly rotated) rectangle.

    ``center`` is ``(row, col)`` in pixel-edge coordinates, ``size`` is
    ``(height, width)``; ``angle`` rotates counter-clockwise in radians.
    """
    rows = np.arange(shape[0])[:, None] + 0.5 - center[0]
    cols = np.arange(shape[1])[None, :] + 0.5 - center[1]
    c, s = np.cos(angle), np.sin(angle)
    u = c * rows + s * cols
    v = -s * rows + c * cols
    return (np.abs(u) <= size[0] / 2) & (np.abs(v) <= size[1] / 2)


def _dilate(mask):
    out = mask.copy()
    out[1:] |= mask[:-1]
    out[:-1] |= mask[1:]
    out[:, 1:] |= out[:, :-1].copy()
    out[:, :-1] |= out[:, 1:].copy()
    return out


def _smooth_noise(rng, size, cells):
    coarse = rng.random((cells, cells))
    up = _interp_matrix(cells, size // cells)
    return up @ coarse @ up.T


def generate_scene(cfg: SynthConfig, id: str = "") -> Sample:
    """One scene of non-touching rectangular buildings on a textured ground.

    Buildings are kept at least one pixel apart so every connected component
    of the label is exactly one building.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.size
    label = np.zeros((n, n), dtype=bool)
    buildings = []
    count = int(rng.integers(cfg.count_range[0], cfg.count_range[1] + 1))
    lo, hi = cfg.size_range
    for _ in range(count):
        for _attempt in range(100):
            h, w = (int(v) for v in rng.integers(lo, hi + 1, size=2))
            angle = float(rng.uniform(0, np.pi / 2)) if cfg.rotation else 0.0
            if cfg.rotation:
                r = min(0.5 * np.hypot(h, w), n / 2)
                cy, cx = rng.uniform(r, n - r, size=2)
            else:
                cy = int(rng.integers(0, n - h + 1)) + h / 2
                cx = int(rng.integers(0, n - w + 1)) + w / 2
            footprint = rasterize_rectangle(label.shape, (cy, cx), (h, w), angle)
            if footprint.any() and not (_dilate(footprint) & label).any():
                label |= footprint
                buildings.append(footprint)
                break

    # ground: two blended earth tones modulated by low-frequency texture
    tex = _smooth_noise(rng, n, 4) * 0.6 + _smooth_noise(rng, n, 8) * 0.4
    grass = np.array([0.25, 0.38, 0.20]) + rng.uniform(-0.05, 0.05, 3)
    soil = np.array([0.42, 0.36, 0.28]) + rng.uniform(-0.05, 0.05, 3)
    image = grass * (1 - tex[..., None]) + soil * tex[..., None]

    for footprint in buildings:
        roof = rng.uniform(0.55, 0.9) * np.array([1.0, 1.0, 1.0]) + rng.uniform(-0.12, 0.12, 3)
        # shadow cast one pixel down-right, then the roof on top
        shadow = np.zeros_like(footprint)
        shadow[1:, 1:] = footprint[:-1, :-1]
        image[shadow & ~footprint & ~label] *= 0.55
        image[footprint] = roof
        edge = footprint & ~_erode(footprint)
        image[edge] *= 0.85

    image = image + cfg.noise * rng.standard_normal(image.shape)
    return Sample(np.clip(image, 0.0, 1.0), label.astype(np.uint8), id)


def _erode(mask):
    return ~_dilate(~mask)


def generate_dataset(cfg: SynthConfig, n: int, prefix: str = "scene") -> list:
    """``n`` scenes; scene ``i`` is seeded by ``(cfg.seed, i)``."""
    samples = []
    for i in range(n):
        seed = int(np.random.SeedSequence([cfg.seed, i]).generate_state(1)[0])
        samples.append(generate_scene(replace(cfg, seed=seed), id=f"{prefix}_{i:05d}"))
    return samples


# --------------------------------------------------------------------------
# disk layout
# --------------------------------------------------------------------------


def save_dataset(samples, root):
    root = Path(root)
    for s in samples:
        write_png(root / "images" / f"{s.id}.png", to_uint8(s.image))
        write_png(root / "labels" / f"{s.id}.png", (s.label.astype(np.uint8) * 255))


def binarize_label(raw: np.ndarray) -> np.ndarray:
    """8-bit grayscale to {0, 1}: building where the value is >= 128."""
    return (np.asarray(raw) >= 128).astype(np.uint8)


def load_dataset(root) -> list:
    """Load ``images/`` and ``labels/`` pairs, sorted by id."""
    root = Path(root)
    img_dir, lbl_dir = root / "images", root / "labels"
    images = {p.stem: p for p in img_dir.glob("*.png")} if img_dir.is_dir() else {}
    labels = {p.stem: p for p in lbl_dir.glob("*.png")} if lbl_dir.is_dir() else {}
    missing_labels = sorted(set(images) - set(labels))
    missing_images = sorted(set(labels) - set(images))
    if missing_labels or missing_images:
        raise DatasetError(
            f"unpaired files under {root}: no label for {missing_labels}, no image for {missing_images}"
        )
    samples = []
    for stem in sorted(images):
        image = read_png(images[stem], "RGB").astype(np.float64) / 255.0
        raw = read_png(labels[stem])
        if raw.ndim == 3:
            raw = read_png(labels[stem], "L")
        if image.shape[:2] != raw.shape:
            raise DatasetError(f"{stem}: image {image.shape[:2]} and label {raw.shape} differ in size")
        h, w = raw.shape
        if h % SIZE_MULTIPLE or w % SIZE_MULTIPLE:
            raise DatasetError(f"{stem}: size {h}x{w} is not divisible by {SIZE_MULTIPLE}; crop or resize it")
        samples.append(Sample(image, binarize_label(raw), stem))
    return samples


# --------------------------------------------------------------------------
# augmentation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentConfig:
    p_rotate: float = 0.25
    p_hflip: float = 0.25
    p_vflip: float = 0.25

    def check(self, shape):
        if self.p_rotate > 0 and shape[0] != shape[1]:
            raise ConfigError(f"rotation needs square patches, got {shape[0]}x{shape[1]}")


def augment(sample: Sample, rng, cfg: AugmentConfig = AugmentConfig()) -> Sample:
    """Independent random rotation (90/180/270), horizontal and vertical flips.

    Always consumes three uniforms and one integer from ``rng`` so the stream
    position does not depend on which transforms fired.
    """
    cfg.check(sample.label.shape)
    u = rng.random(3)
    quarter_turns = int(rng.integers(1, 4))
    image, label = sample.image, sample.label
    if u[0] < cfg.p_rotate:
        image, label = np.rot90(image, quarter_turns), np.rot90(label, quarter_turns)
    if u[1] < cfg.p_hflip:
        image, label = image[:, ::-1], label[:, ::-1]
    if u[2] < cfg.p_vflip:
        image, label = image[::-1], label[::-1]
    return Sample(np.ascontiguousarray(image), np.ascontiguousarray(label), sample.id)

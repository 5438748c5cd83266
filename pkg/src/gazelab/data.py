"""Synthetic gaze datasets.

Each image holds one to three bright shapes (disc, square, bar) on a dark,
low-contrast textured background.  The gaze density is a max-normalized sum
of isotropic Gaussians centred on the shapes, fixations are drawn from that
density, and every shape also contributes a pixel mask for its class so the
same samples can drive the dissection pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .tensor import bilinear_resize

PALETTE = ("disc", "square", "bar")


@dataclass(frozen=True)
class BlobSpec:
    min_shapes: int = 1
    max_shapes: int = 3
    min_radius: int = 4
    max_radius: int = 8
    sigma_scale: float = 1.0
    n_fixations: int = 20
    texture: float = 0.08
    background: float = 0.15
    tint: tuple[float, float] = (0.6, 0.9)
    classes: tuple[str, ...] = PALETTE

    def validate(self, h: int, w: int) -> None:
        if not 1 <= self.min_shapes <= self.max_shapes:
            raise ConfigError("need 1 <= min_shapes <= max_shapes")
        if not 1 <= self.min_radius <= self.max_radius:
            raise ConfigError("need 1 <= min_radius <= max_radius")
        if 2 * self.max_radius + 1 > min(h, w):
            raise ConfigError(f"blobs of radius {self.max_radius} do not fit a {h}x{w} image")
        if self.n_fixations < 1:
            raise ConfigError("n_fixations must be positive")
        if not self.classes or any(c not in PALETTE for c in self.classes):
            raise ConfigError(f"shape classes must come from {PALETTE}")


@dataclass(frozen=True)
class Shape:
    kind: str
    row: int
    col: int
    radius: int
    color: tuple[float, float, float] = (1.0, 0.2, 0.2)
    vertical: bool = False


@dataclass
class GazeSample:
    image: np.ndarray  # h x w x 3 in [0, 1]
    density: np.ndarray  # h x w, max exactly 1
    fixations: np.ndarray  # n x 2 int (row, col)
    image_id: str = ""
    masks: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class LabeledSample:
    image: np.ndarray
    masks: dict[str, np.ndarray]
    image_id: str = ""


def shape_mask(shape: Shape, h: int, w: int) -> np.ndarray:
    rr, cc = np.mgrid[0:h, 0:w]
    dr, dc = rr - shape.row, cc - shape.col
    r = shape.radius
    if shape.kind == "disc":
        return dr**2 + dc**2 <= r**2
    if shape.kind == "square":
        return (np.abs(dr) <= r) & (np.abs(dc) <= r)
    if shape.kind == "bar":
        long_, short = (dr, dc) if shape.vertical else (dc, dr)
        return (np.abs(long_) <= r) & (np.abs(short) <= max(r // 3, 1))
    raise ConfigError(f"unknown shape kind {shape.kind!r}")


def gaze_density(shapes, h: int, w: int, sigma_scale: float = 1.0) -> np.ndarray:
    rr, cc = np.mgrid[0:h, 0:w]
    dens = np.zeros((h, w))
    for s in shapes:
        sigma = sigma_scale * s.radius
        dens += np.exp(-((rr - s.row) ** 2 + (cc - s.col) ** 2) / (2 * sigma**2))
    return dens / dens.max()


def sample_fixations(density, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` pixel coordinates with probability proportional to density."""
    density = np.asarray(density, dtype=np.float64)
    flat = rng.choice(density.size, size=n, p=(density / density.sum()).ravel())
    return np.stack(np.unravel_index(flat, density.shape), axis=1).astype(np.int64)


def _background(h: int, w: int, level: float, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    coarse = rng.uniform(-1, 1, size=(max(h // 8, 2), max(w // 8, 2), 3))
    smooth = bilinear_resize(coarse, h, w)
    fine = rng.uniform(-1, 1, size=(h, w, 3))
    return np.clip(level + amplitude * (0.7 * smooth + 0.3 * fine), 0.0, 1.0)


def _random_color(tint: tuple[float, float], rng: np.random.Generator) -> tuple[float, float, float]:
    # one channel at full intensity, the others drawn from the tint range
    color = rng.uniform(tint[0], tint[1], size=3)
    color[rng.integers(3)] = 1.0
    return tuple(float(c) for c in color)


def render_sample(h: int, w: int, shapes, rng: np.random.Generator,
                  spec: BlobSpec = BlobSpec(), image_id: str = "") -> GazeSample:
    """Draw ``shapes`` onto a textured background and derive density and fixations."""
    image = _background(h, w, spec.background, spec.texture, rng)
    masks: dict[str, np.ndarray] = {}
    for s in shapes:
        m = shape_mask(s, h, w)
        image[m] = s.color
        masks[s.kind] = masks.get(s.kind, np.zeros((h, w), dtype=bool)) | m
    density = gaze_density(shapes, h, w, spec.sigma_scale)
    fix = sample_fixations(density, spec.n_fixations, rng)
    return GazeSample(image, density, fix, image_id, masks)


def random_shapes(h: int, w: int, spec: BlobSpec, rng: np.random.Generator) -> list[Shape]:
    shapes = []
    for _ in range(rng.integers(spec.min_shapes, spec.max_shapes + 1)):
        r = int(rng.integers(spec.min_radius, spec.max_radius + 1))
        shapes.append(Shape(
            kind=str(spec.classes[rng.integers(len(spec.classes))]),
            row=int(rng.integers(r, h - r)),
            col=int(rng.integers(r, w - r)),
            radius=r,
            color=_random_color(spec.tint, rng),
            vertical=bool(rng.integers(2)),
        ))
    return shapes


def synth_dataset(seed: int, count: int, h: int, w: int, spec: BlobSpec = BlobSpec()) -> list[GazeSample]:
    """``count`` samples, fully determined by ``seed``."""
    spec.validate(h, w)
    if count < 0:
        raise ConfigError("count must be non-negative")
    rng = np.random.default_rng(seed)
    return [render_sample(h, w, random_shapes(h, w, spec, rng), rng, spec, image_id=f"{i:05d}")
            for i in range(count)]


def as_labeled(samples) -> list[LabeledSample]:
    return [LabeledSample(s.image, s.masks, s.image_id) for s in samples]


def split_indices(n: int, seed: int) -> tuple[list[int], list[int]]:
    """Deterministic 80/20 train/validation split.

    Every fifth position of a seeded permutation goes to validation.  With
    a single sample, that sample is used for both.
    """
    perm = np.random.default_rng(seed).permutation(n)
    val = sorted(int(i) for i in perm[0::5])
    train = sorted(set(range(n)) - set(val))
    if not train:
        train = list(val)
    return train, val

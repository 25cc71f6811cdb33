"""The fill-in masking operator and MCAR mask samplers.

Masks are float arrays of exact 0.0/1.0 values, flattened row-major so they
line up with data vectors; 1 marks an observed coordinate.  Spatial mechanisms
use ``image_shape`` only while sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MECHANISMS = ("square", "dropout", "var_rect", "quadrant")


class MaskError(ValueError):
    pass


def apply_mask(x, m, tau: float = 0.0) -> np.ndarray:
    """``x`` on observed coordinates, ``tau`` elsewhere (works on batches too)."""
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m)
    if x.shape != m.shape:
        raise MaskError(f"apply_mask: data shape {x.shape} != mask shape {m.shape}")
    return np.where(m == 1, x, np.float64(tau))


def _check_shape(image_shape) -> tuple[int, int]:
    if len(image_shape) != 2 or min(image_shape) < 1:
        raise MaskError(f"image_shape must be (height, width), got {image_shape}")
    return int(image_shape[0]), int(image_shape[1])


def _rectangles(shape, tops, lefts, heights, widths) -> np.ndarray:
    h, w = shape
    rows = np.arange(h)[None, :, None]
    cols = np.arange(w)[None, None, :]
    inside = (
        (rows >= tops[:, None, None])
        & (rows < (tops + heights)[:, None, None])
        & (cols >= lefts[:, None, None])
        & (cols < (lefts + widths)[:, None, None])
    )
    return inside.reshape(len(tops), h * w).astype(np.float64)


def sample_square_masks(rng: np.random.Generator, image_shape, k: int, count: int) -> np.ndarray:
    h, w = _check_shape(image_shape)
    if not 1 <= k <= min(h, w):
        raise MaskError(f"square side {k} does not fit in image {h}x{w}")
    tops = rng.integers(0, h - k + 1, size=count)
    lefts = rng.integers(0, w - k + 1, size=count)
    side = np.full(count, k)
    return _rectangles((h, w), tops, lefts, side, side)


def sample_square_mask(rng, image_shape, k: int) -> np.ndarray:
    """Observe only a ``k x k`` square at a uniformly random position."""
    return sample_square_masks(rng, image_shape, k, 1)[0]


def sample_dropout_masks(rng: np.random.Generator, n: int, rate: float, count: int) -> np.ndarray:
    if not 0.0 <= rate <= 1.0:
        raise MaskError(f"dropout rate must lie in [0, 1], got {rate}")
    return (rng.random((count, n)) >= rate).astype(np.float64)


def sample_dropout_mask(rng, n: int, rate: float) -> np.ndarray:
    return sample_dropout_masks(rng, n, rate, 1)[0]


def rect_side_bounds(length: int) -> tuple[int, int]:
    """Integer side range for variable rectangles: [ceil(L/4), floor(3L/4)]."""
    lo, hi = math.ceil(0.25 * length), math.floor(0.75 * length)
    return lo, max(lo, hi)


def sample_variable_rect_masks(rng: np.random.Generator, image_shape, count: int) -> np.ndarray:
    h, w = _check_shape(image_shape)
    hlo, hhi = rect_side_bounds(h)
    wlo, whi = rect_side_bounds(w)
    heights = rng.integers(hlo, hhi + 1, size=count)
    widths = rng.integers(wlo, whi + 1, size=count)
    tops = rng.integers(0, h - heights + 1)
    lefts = rng.integers(0, w - widths + 1)
    return _rectangles((h, w), tops, lefts, heights, widths)


def sample_variable_rect_mask(rng, image_shape) -> np.ndarray:
    """Observe a rectangle whose sides are 25%-75% of the image sides."""
    return sample_variable_rect_masks(rng, image_shape, 1)[0]


def sample_quadrant_masks(rng: np.random.Generator, image_shape, count: int) -> np.ndarray:
    h, w = _check_shape(image_shape)
    if h % 2 or w % 2:
        raise MaskError(f"quadrant masks need even height and width, got {h}x{w}")
    quad = rng.integers(0, 4, size=count)
    tops = (quad // 2) * (h // 2)
    lefts = (quad % 2) * (w // 2)
    return _rectangles((h, w), tops, lefts, np.full(count, h // 2), np.full(count, w // 2))


def sample_quadrant_mask(rng, image_shape) -> np.ndarray:
    return sample_quadrant_masks(rng, image_shape, 1)[0]


@dataclass(frozen=True)
class MaskMechanism:
    kind: str
    k: int | None = None
    rate: float | None = None
    image_shape: tuple[int, int] | None = None
    n: int | None = None

    def __post_init__(self):
        if self.kind not in MECHANISMS:
            raise MaskError(f"unknown mechanism {self.kind!r}; expected one of {MECHANISMS}")
        if self.image_shape is not None:
            object.__setattr__(self, "image_shape", tuple(int(v) for v in self.image_shape))
        if self.kind == "dropout":
            if self.rate is None or not 0.0 <= self.rate <= 1.0:
                raise MaskError(f"dropout needs a rate in [0, 1], got {self.rate}")
            return
        if self.image_shape is None:
            raise MaskError(f"{self.kind} masks need image_shape")
        h, w = _check_shape(self.image_shape)
        if self.kind == "square" and (self.k is None or not 1 <= self.k <= min(h, w)):
            raise MaskError(f"square side k={self.k} must be in [1, {min(h, w)}]")
        if self.kind == "quadrant" and (h % 2 or w % 2):
            raise MaskError(f"quadrant masks need even height and width, got {h}x{w}")

    def dim(self, n: int | None = None) -> int:
        if self.image_shape is not None:
            return self.image_shape[0] * self.image_shape[1]
        if self.n is not None:
            return self.n
        if n is None:
            raise MaskError("dropout mechanism needs a dimension")
        return n

    def sample(self, rng: np.random.Generator, count: int, n: int | None = None) -> np.ndarray:
        if self.kind == "dropout":
            return sample_dropout_masks(rng, self.dim(n), self.rate, count)
        if n is not None and n != self.dim():
            raise MaskError(f"mechanism image {self.image_shape} does not match data dimension {n}")
        if self.kind == "square":
            return sample_square_masks(rng, self.image_shape, self.k, count)
        if self.kind == "var_rect":
            return sample_variable_rect_masks(rng, self.image_shape, count)
        return sample_quadrant_masks(rng, self.image_shape, count)

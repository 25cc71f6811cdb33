"""Built-in toy datasets with exactly known distributions."""

from __future__ import annotations

import itertools

import numpy as np

TOYS = ("ring", "bars")

RING_CLUSTERS = 8
RING_RADIUS = 2.0
BARS_SIDE = 6
BARS_PROB = 0.25


def ring_centers(k: int = RING_CLUSTERS, radius: float = RING_RADIUS) -> np.ndarray:
    angles = 2 * np.pi * np.arange(k) / k
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # Snap the cos/sin round-off (e.g. cos(pi/2) = 6e-17) so masked points collide exactly.
    centers[np.abs(centers) < 1e-12] = 0.0
    return centers


def sample_ring(rng: np.random.Generator, count: int) -> np.ndarray:
    """Uniform mixture of point masses on a ring."""
    centers = ring_centers()
    return centers[rng.integers(0, len(centers), size=count)].copy()


def masked_ring_support(tau: float = 0.0) -> np.ndarray:
    """Distinct points ``f_tau(c, m)`` over ring centres ``c`` and all 2-D masks."""
    pts = []
    for c in ring_centers():
        for m in itertools.product((0, 1), repeat=2):
            pts.append(np.where(np.array(m) == 1, c, tau))
    return np.unique(np.round(np.array(pts), 12), axis=0)


def nearest_assignment(points: np.ndarray, support: np.ndarray) -> np.ndarray:
    d = ((points[:, None, :] - support[None, :, :]) ** 2).sum(axis=2)
    return d.argmin(axis=1)


def assignment_histogram(points: np.ndarray, support: np.ndarray) -> np.ndarray:
    idx = nearest_assignment(np.asarray(points, dtype=np.float64), support)
    return np.bincount(idx, minlength=len(support)) / max(len(idx), 1)


def sample_bars(rng: np.random.Generator, count: int, side: int = BARS_SIDE, p: float = BARS_PROB) -> np.ndarray:
    """Binary images: union of full rows and full columns, each kept w.p. ``p``."""
    rows = rng.random((count, side)) < p
    cols = rng.random((count, side)) < p
    img = rows[:, :, None] | cols[:, None, :]
    return img.reshape(count, side * side).astype(np.float64)


def bars_distribution(side: int = BARS_SIDE, p: float = BARS_PROB) -> dict[bytes, float]:
    """Exact law of ``sample_bars`` keyed by the image's uint8 bytes."""
    out: dict[bytes, float] = {}
    for rbits in itertools.product((0, 1), repeat=side):
        pr = p ** sum(rbits) * (1 - p) ** (side - sum(rbits))
        for cbits in itertools.product((0, 1), repeat=side):
            pc = p ** sum(cbits) * (1 - p) ** (side - sum(cbits))
            img = np.logical_or.outer(np.array(rbits, bool), np.array(cbits, bool))
            key = img.astype(np.uint8).tobytes()
            out[key] = out.get(key, 0.0) + pr * pc
    return out


def bars_tv(samples: np.ndarray, exact: dict[bytes, float] | None = None) -> float:
    """TV between thresholded samples and the exact bars law; off-support mass counts fully."""
    exact = bars_distribution() if exact is None else exact
    binary = (np.asarray(samples) > 0.5).astype(np.uint8)
    counts: dict[bytes, int] = {}
    for row in binary:
        key = row.tobytes()
        counts[key] = counts.get(key, 0) + 1
    total = len(binary)
    tv = sum(abs(counts.get(k, 0) / total - pk) for k, pk in exact.items())
    tv += sum(c / total for k, c in counts.items() if k not in exact)
    return 0.5 * tv


def sample_toy(name: str, rng: np.random.Generator, count: int) -> np.ndarray:
    if name == "ring":
        return sample_ring(rng, count)
    if name == "bars":
        return sample_bars(rng, count)
    raise ValueError(f"unknown toy dataset {name!r}; expected one of {TOYS}")

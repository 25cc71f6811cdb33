"""Exact-distribution TV monitors for the ring toy."""

from __future__ import annotations

import numpy as np

from .evaluation import tv_distance
from .identifiability import mask_array
from .masking import apply_mask
from .misgan import MisganModel, sample_data, sample_masks
from .toys import assignment_histogram, masked_ring_support, nearest_assignment, ring_centers


def dropout_mask_law(n: int, rate: float) -> np.ndarray:
    """Probability of each mask in lexicographic order under independent dropout."""
    masks = mask_array(n)
    ones = masks.sum(axis=1)
    return (1.0 - rate) ** ones * rate ** (n - ones)


def pattern_index(masks: np.ndarray) -> np.ndarray:
    bits = (np.asarray(masks) > 0.5).astype(np.int64)
    n = bits.shape[1]
    return bits @ (2 ** np.arange(n - 1, -1, -1))


def mask_histogram(masks: np.ndarray) -> np.ndarray:
    n = np.asarray(masks).shape[1]
    return np.bincount(pattern_index(masks), minlength=2**n) / len(masks)


def exact_masked_ring_histogram(mask_law: np.ndarray, tau: float = 0.0) -> np.ndarray:
    """Law of ``f_tau(c, m)`` over the masked-ring support, ``c`` uniform, ``m ~ mask_law``."""
    support = masked_ring_support(tau)
    centers = ring_centers()
    hist = np.zeros(len(support))
    for mask, qm in zip(mask_array(2), mask_law):
        pts = apply_mask(centers, np.broadcast_to(mask, centers.shape), tau)
        np.add.at(hist, nearest_assignment(pts, support), qm / len(centers))
    return hist


class RingMonitor:
    """Reports ``tv_mask`` and ``tv_data`` for a model trained on the ring toy."""

    def __init__(self, mask_law: np.ndarray, tau: float = 0.0, count: int = 4000):
        self.mask_law = np.asarray(mask_law, dtype=np.float64)
        self.tau = tau
        self.count = count
        self.support = masked_ring_support(tau)
        self.data_law = exact_masked_ring_histogram(self.mask_law, tau)

    def __call__(self, model: MisganModel, rng: np.random.Generator) -> dict:
        masks = (sample_masks(model.G_m, rng, self.count) > 0.5).astype(np.float64)
        x = sample_data(model.G_x, rng, self.count)
        masked = apply_mask(x, masks, self.tau)
        return {
            "tv_mask": tv_distance(mask_histogram(masks), self.mask_law),
            "tv_data": tv_distance(assignment_histogram(masked, self.support), self.data_law),
        }

"""Distribution and imputation metrics, plus non-learned imputation baselines."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

DEFAULT_FEATURE_SEED = 1234
DEFAULT_FEATURE_DIM = 8
COV_RIDGE = 1e-6


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    """``identity`` or a fixed Gaussian random projection ``x @ W / sqrt(n)``."""

    kind: str = "identity"
    seed: int = DEFAULT_FEATURE_SEED
    out_dim: int = DEFAULT_FEATURE_DIM

    def __call__(self, samples) -> np.ndarray:
        x = np.asarray(samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if self.kind == "identity":
            return x
        if self.kind != "random_linear":
            raise MetricError(f"unknown feature map {self.kind!r}")
        n = x.shape[1]
        if self.out_dim > n:
            raise MetricError(f"feature dim {self.out_dim} exceeds data dim {n}")
        w = np.random.default_rng(self.seed).standard_normal((n, self.out_dim)) / np.sqrt(n)
        return x @ w


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(a)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(samples_a, samples_b, fmap: FeatureMap | None = None) -> float:
    """Squared Frechet distance between Gaussians fitted to mapped features.

    The cross term uses ``Tr sqrt(S_a^1/2 S_b S_a^1/2)``, the symmetric form of
    ``Tr sqrt(S_a S_b)``, so an eigendecomposition suffices.
    """
    fmap = fmap or FeatureMap()
    fa, fb = fmap(samples_a), fmap(samples_b)
    if len(fa) < 2 or len(fb) < 2:
        raise MetricError("Frechet distance needs at least 2 samples per side")
    if fa.shape[1] != fb.shape[1]:
        raise MetricError(f"feature dims differ: {fa.shape[1]} vs {fb.shape[1]}")
    ridge = COV_RIDGE * np.eye(fa.shape[1])
    mu_a, mu_b = fa.mean(axis=0), fb.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(fa, rowvar=False)) + ridge
    cov_b = np.atleast_2d(np.cov(fb, rowvar=False)) + ridge
    root_a = _psd_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    inner = 0.5 * (inner + inner.T)
    cross = np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None)).sum()
    d2 = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross)
    return max(d2, 0.0)


def rmse_imputation(imputed, ground_truth, masks) -> float:
    """Root mean squared error over the missing (mask == 0) coordinates only."""
    imputed = np.asarray(imputed, dtype=np.float64)
    truth = np.asarray(ground_truth, dtype=np.float64)
    masks = np.asarray(masks)
    if not imputed.shape == truth.shape == masks.shape:
        raise MetricError(f"misaligned shapes {imputed.shape}, {truth.shape}, {masks.shape}")
    missing = masks == 0
    if not missing.any():
        raise MetricError("no missing coordinates to score")
    return float(np.sqrt(np.mean((imputed[missing] - truth[missing]) ** 2)))


def tv_distance(hist_a, hist_b, atol: float = 1e-9) -> float:
    a = np.asarray(hist_a, dtype=np.float64)
    b = np.asarray(hist_b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"histograms have different supports: {a.shape} vs {b.shape}")
    for h in (a, b):
        if (h < 0).any() or abs(h.sum() - 1.0) > atol:
            raise MetricError("histograms must be non-negative and sum to 1")
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def pattern_histograms(masks_a, masks_b) -> tuple[np.ndarray, np.ndarray, list[bytes]]:
    """Empirical histograms of binary row patterns over the union of observed patterns."""
    keys_a = [r.tobytes() for r in (np.asarray(masks_a) > 0.5).astype(np.uint8)]
    keys_b = [r.tobytes() for r in (np.asarray(masks_b) > 0.5).astype(np.uint8)]
    support = sorted(set(keys_a) | set(keys_b))
    pos = {k: i for i, k in enumerate(support)}
    ha = np.bincount([pos[k] for k in keys_a], minlength=len(support)) / len(keys_a)
    hb = np.bincount([pos[k] for k in keys_b], minlength=len(support)) / len(keys_b)
    return ha, hb, support


# --------------------------------------------------------------------------
# baselines


def zero_impute(x, m) -> np.ndarray:
    return np.where(np.asarray(m) == 1, x, 0.0)


def mean_impute(x, m) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    obs = np.asarray(m) == 1
    counts = obs.sum(axis=0)
    sums = np.where(obs, x, 0.0).sum(axis=0)
    col_mean = np.divide(sums, counts, out=np.zeros(x.shape[1]), where=counts > 0)
    return np.where(obs, x, col_mean[None, :])


def als_factorize(
    x, m, rank: int = 8, iters: int = 100, reg: float = 1e-3, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Fit ``x ~ U @ V.T`` on observed entries by alternating ridge regressions."""
    x = np.asarray(x, dtype=np.float64)
    obs = np.asarray(m) == 1
    rows, cols = x.shape
    if not 1 <= rank < min(rows, cols):
        raise MetricError(f"rank {rank} must be in [1, min(dims)) = [1, {min(rows, cols)})")
    rng = np.random.default_rng(seed)
    U = rng.normal(scale=0.1, size=(rows, rank))
    V = rng.normal(scale=0.1, size=(cols, rank))
    eye = reg * np.eye(rank)

    def solve(F, target, observed):
        out = np.zeros((target.shape[0], rank))
        for i in range(target.shape[0]):
            sel = observed[i]
            Fi = F[sel]
            out[i] = np.linalg.solve(Fi.T @ Fi + eye, Fi.T @ target[i, sel])
        return out

    for _ in range(iters):
        U = solve(V, x, obs)
        V = solve(U, x.T, obs.T)
    return U, V


def mf_impute(x, m, rank: int = 8, iters: int = 100, reg: float = 1e-3, seed: int = 0) -> np.ndarray:
    U, V = als_factorize(x, m, rank, iters, reg, seed)
    return np.where(np.asarray(m) == 1, x, U @ V.T)


def baseline_impute(x, m, kind: str = "mean", **kwargs) -> np.ndarray:
    """Fill missing entries by ``zero``, ``mean`` or ``mf`` (ALS matrix factorisation)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise MetricError("baseline imputation needs a non-empty 2-D dataset")
    if kind == "zero":
        return zero_impute(x, m)
    if kind == "mean":
        return mean_impute(x, m)
    if kind in ("mf", "matrix_factorization"):
        return mf_impute(x, m, **kwargs)
    raise MetricError(f"unknown baseline {kind!r}")


@dataclass
class MetricReport:
    fid: float
    rmse: float | None = None
    tv: float | None = None
    sample_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fid < 0 or (self.rmse is not None and self.rmse < 0):
            raise MetricError("metrics must be non-negative")
        if self.tv is not None and not 0.0 <= self.tv <= 1.0:
            raise MetricError(f"tv must lie in [0, 1], got {self.tv}")

    def to_dict(self) -> dict:
        return asdict(self)

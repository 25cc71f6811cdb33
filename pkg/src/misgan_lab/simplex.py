"""Textbook primal simplex for standard-form LPs ``A x = b, x >= 0``.

Bland's rule picks both the entering column (lowest index with negative
reduced cost) and the leaving row (lowest basic index among ratio ties), which
rules out cycling on degenerate pivots.  Phase I runs once per constraint set;
any number of objectives can then be optimised from the resulting basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(RuntimeError):
    pass


class InfeasibleError(LPError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal" or "unbounded"
    x: np.ndarray
    value: float
    ray: np.ndarray | None = None


def _pivot(tab: np.ndarray, obj: np.ndarray, basis: list[int], r: int, j: int) -> None:
    tab[r] /= tab[r, j]
    col = tab[:, j].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])
    obj -= obj[j] * tab[r]
    basis[r] = j


def _bland_loop(tab, obj, basis, n_cols, tol, max_iter):
    """Run pivots until optimal; return the unbounded column index or None."""
    for _ in range(max_iter):
        candidates = np.flatnonzero(obj[:n_cols] < -tol)
        if candidates.size == 0:
            return None
        j = int(candidates[0])
        col = tab[:, j]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            return j
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(tab, obj, basis, r, j)
    raise LPError(f"simplex did not terminate within {max_iter} pivots")


class StandardFormLP:
    """Feasible region ``{x >= 0 : A x = b}`` with a phase-I basis cached."""

    def __init__(self, A, b, tol: float = 1e-9, max_iter: int = 10_000):
        A = np.array(A, dtype=np.float64, copy=True)
        b = np.array(b, dtype=np.float64, copy=True)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise ValueError(f"bad LP shapes A={A.shape} b={b.shape}")
        m, n = A.shape
        self.n = n
        self.tol = tol
        self.max_iter = max_iter

        flip = b < 0
        A[flip] *= -1
        b[flip] *= -1

        tab = np.hstack([A, np.eye(m), b[:, None]])
        basis = list(range(n, n + m))
        obj = np.zeros(n + m + 1)
        obj[:n] = -A.sum(axis=0)
        obj[-1] = -b.sum()
        _bland_loop(tab, obj, basis, n + m, tol, max_iter)

        infeas = tab[[i for i, v in enumerate(basis) if v >= n], -1].sum() if basis else 0.0
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if infeas > 1e-8 * scale:
            raise InfeasibleError(f"no x >= 0 satisfies A x = b (phase-I residual {infeas:.3e})")

        # Drive remaining (zero-level) artificials out; drop rows that are redundant.
        keep = []
        for r in range(m):
            if basis[r] < n:
                keep.append(r)
                continue
            row = tab[r, :n]
            nz = np.flatnonzero(np.abs(row) > tol)
            if nz.size:
                _pivot(tab, obj, basis, r, int(nz[0]))
                keep.append(r)
        tab = tab[keep]
        self._tab = np.hstack([tab[:, :n], tab[:, -1:]])
        self._basis = [basis[r] for r in keep]

    def feasible_point(self) -> np.ndarray:
        return self._point(self._tab, self._basis)

    def _point(self, tab, basis) -> np.ndarray:
        x = np.zeros(self.n)
        x[basis] = np.maximum(tab[:, -1], 0.0)
        return x

    def minimize(self, c) -> LPResult:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (self.n,):
            raise ValueError(f"objective has shape {c.shape}, expected ({self.n},)")
        tab = self._tab.copy()
        basis = list(self._basis)
        obj = np.append(c, 0.0)
        cb = c[basis]
        obj -= cb @ tab
        j = _bland_loop(tab, obj, basis, self.n, self.tol, self.max_iter)
        x = self._point(tab, basis)
        if j is not None:
            ray = np.zeros(self.n)
            ray[j] = 1.0
            ray[basis] = -tab[:, j]
            return LPResult("unbounded", x, -np.inf, ray)
        return LPResult("optimal", x, float(c @ x))

    def maximize(self, c) -> LPResult:
        res = self.minimize(-np.asarray(c, dtype=np.float64))
        value = np.inf if res.status == "unbounded" else -res.value
        return LPResult(res.status, res.x, value, res.ray)


def solve_lp(c, A_eq, b_eq, maximize: bool = False) -> LPResult:
    lp = StandardFormLP(A_eq, b_eq)
    return lp.maximize(c) if maximize else lp.minimize(c)

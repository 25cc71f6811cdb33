"""Exact recoverability analysis for MCAR-masked discrete distributions.

States are vectors over a finite alphabet ``P``; the state space ``I = P**n``
and the mask set ``M = {0,1}**n`` are both enumerated in lexicographic order
(first coordinate most significant).  Internally a state is a row of alphabet
indices, so symbolic alphabets work the same as numeric ones.

The transition matrix ``T[t, s]`` is the probability that state ``s`` shows up
as ``t`` after masking with a mask drawn from ``q`` and filling unobserved
coordinates with ``tau``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

import numpy as np

from .simplex import InfeasibleError, StandardFormLP

STATE_LIMIT = 10**5


class IdentifiabilityError(ValueError):
    pass


class InconsistentObservationError(IdentifiabilityError):
    """The observed vector is not ``T x`` for any ``x``."""

    def __init__(self, message: str, state: tuple):
        super().__init__(message)
        self.state = state


class _Psi:
    """Reserved fill symbol that never equals an alphabet value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "PSI"

    def __reduce__(self):
        return (_Psi, ())


PSI = _Psi()


@dataclass(frozen=True)
class Alphabet:
    values: tuple[Hashable, ...]
    n: int
    limit: int = STATE_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if len(set(self.values)) != len(self.values):
            raise IdentifiabilityError(f"alphabet values must be distinct: {self.values}")
        if not self.values:
            raise IdentifiabilityError("alphabet is empty")
        if self.n < 1:
            raise IdentifiabilityError(f"dimension must be >= 1, got {self.n}")
        if len(self.values) ** self.n > self.limit:
            raise IdentifiabilityError(
                f"state space |P|^n = {len(self.values)}^{self.n} exceeds limit {self.limit}"
            )

    @property
    def size(self) -> int:
        return len(self.values) ** self.n

    def index_of(self, value) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise IdentifiabilityError(
                f"fill value {value!r} is not in the alphabet {self.values}; "
                "use augment_alphabet for a fill value outside P"
            ) from None

    def states(self) -> np.ndarray:
        """``(|I|, n)`` array of alphabet indices, lexicographic order (read-only)."""
        return self._states

    @functools.cached_property
    def _states(self) -> np.ndarray:
        k = len(self.values)
        idx = np.arange(self.size)
        out = np.empty((self.size, self.n), dtype=np.int64)
        for d in range(self.n - 1, -1, -1):
            out[:, d] = idx % k
            idx //= k
        out.flags.writeable = False
        return out

    def flat(self, states: np.ndarray) -> np.ndarray:
        k = len(self.values)
        weights = k ** np.arange(self.n - 1, -1, -1)
        return states @ weights

    def state_values(self, i: int) -> tuple:
        return tuple(self.values[j] for j in self.states()[i])


def enumerate_masks(n: int, limit: int = STATE_LIMIT) -> list[tuple[int, ...]]:
    if n < 0:
        raise IdentifiabilityError(f"n must be non-negative, got {n}")
    if 2**n > limit:
        raise IdentifiabilityError(f"2^{n} masks exceeds limit {limit}")
    return list(itertools.product((0, 1), repeat=n))


def mask_array(n: int) -> np.ndarray:
    return np.array(enumerate_masks(n), dtype=np.int64).reshape(2**n, n)


def _check_q(q, n: int) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (2**n,):
        raise IdentifiabilityError(f"mask distribution needs {2**n} entries, got shape {q.shape}")
    if (q < 0).any() or abs(q.sum() - 1.0) > 1e-12:
        raise IdentifiabilityError("mask distribution must be non-negative and sum to 1")
    return q


@dataclass
class TransitionMatrix:
    entries: np.ndarray
    tau: Any
    q: np.ndarray
    alphabet: Alphabet

    def __matmul__(self, x):
        return self.entries @ np.asarray(x, dtype=np.float64)


def build_transition(q, alphabet: Alphabet, tau) -> TransitionMatrix:
    """Column ``s`` of the result is the distribution of ``f_tau(s, m)``, ``m ~ q``."""
    q = _check_q(q, alphabet.n)
    t_idx = alphabet.index_of(tau)
    states = alphabet.states()
    cols = np.arange(alphabet.size)
    T = np.zeros((alphabet.size, alphabet.size))
    for mask, weight in zip(mask_array(alphabet.n), q):
        if weight == 0.0:
            continue
        targets = alphabet.flat(np.where(mask.astype(bool), states, t_idx))
        T[targets, cols] += weight
    return TransitionMatrix(T, tau, q, alphabet)


def _class_representatives(alphabet: Alphabet, states: np.ndarray, mask: np.ndarray, fill: int) -> np.ndarray:
    """Flat index of the member of each state's ~_mask class with ``fill`` off-mask."""
    return alphabet.flat(np.where(mask.astype(bool), states, fill))


def class_masses(x, alphabet: Alphabet, mask) -> np.ndarray:
    """``x([v]_m)`` for every state ``v`` (vector over I)."""
    x = np.asarray(x, dtype=np.float64)
    states = alphabet.states()
    rep = _class_representatives(alphabet, states, np.asarray(mask), 0)
    totals = np.bincount(rep, weights=x, minlength=alphabet.size)
    return totals[rep]


def marginals(x, alphabet: Alphabet, mask) -> dict[tuple, float]:
    """Mass of each ~_m class, keyed by the state's values with ``None`` off-mask."""
    x = np.asarray(x, dtype=np.float64)
    mask = tuple(int(b) for b in mask)
    if len(mask) != alphabet.n or any(b not in (0, 1) for b in mask):
        raise IdentifiabilityError(f"mask must be a length-{alphabet.n} 0/1 vector, got {mask}")
    out: dict[tuple, float] = {}
    for i, s in enumerate(alphabet.states()):
        key = tuple(alphabet.values[j] if b else None for j, b in zip(s, mask))
        out[key] = out.get(key, 0.0) + float(x[i])
    return out


def apply_transition_via_marginals(x, q, alphabet: Alphabet, tau) -> np.ndarray:
    """``T x`` computed as a q-weighted sum of class masses, never forming ``T``."""
    x = np.asarray(x, dtype=np.float64)
    q = _check_q(q, alphabet.n)
    t_idx = alphabet.index_of(tau)
    states = alphabet.states()
    y = np.zeros(alphabet.size)
    for mask, weight in zip(mask_array(alphabet.n), q):
        if weight == 0.0:
            continue
        # m is consistent with v iff every unobserved coordinate of v equals tau.
        consistent = np.all((states == t_idx) | mask.astype(bool), axis=1)
        y[consistent] += weight * class_masses(x, alphabet, mask)[consistent]
    return y


def null_space(T, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of Null(T) as columns; threshold ``tol * sigma_max``."""
    T = np.asarray(getattr(T, "entries", T), dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise IdentifiabilityError(f"expected a square matrix, got shape {T.shape}")
    _, s, vt = np.linalg.svd(T)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return vt[rank:].T.copy()


def same_nullspace(T1, T2, tol: float = 1e-8, rank_tol: float = 1e-10) -> bool:
    A = np.asarray(getattr(T1, "entries", T1), dtype=np.float64)
    B = np.asarray(getattr(T2, "entries", T2), dtype=np.float64)
    if A.shape != B.shape:
        raise IdentifiabilityError(f"shape mismatch {A.shape} vs {B.shape}")
    N1, N2 = null_space(A, rank_tol), null_space(B, rank_tol)
    r12 = np.linalg.norm(B @ N1, axis=0).max(initial=0.0)
    r21 = np.linalg.norm(A @ N2, axis=0).max(initial=0.0)
    return bool(r12 <= tol and r21 <= tol)


@dataclass
class MarginalTable:
    """``masses[m][class_key]`` for every mask in the support of q."""

    alphabet: Alphabet
    masses: dict[tuple[int, ...], dict[tuple, float]] = field(default_factory=dict)

    def of(self, v: Sequence, mask: Sequence[int]) -> float:
        key = tuple(val if b else None for val, b in zip(v, mask))
        return self.masses[tuple(mask)][key]

    def vector(self, mask: Sequence[int]) -> np.ndarray:
        """``x([v]_m)`` laid out over all states ``v``."""
        return np.array(
            [self.of(self.alphabet.state_values(i), mask) for i in range(self.alphabet.size)]
        )


def reconstruct_marginals(y, q, alphabet: Alphabet, tau, tol: float = 1e-9) -> MarginalTable:
    """Recover every marginal ``x([v]_m)``, ``m`` in supp(q), from ``y = T x``.

    States ``v`` are processed by increasing number of consistent masks.  For a
    state with consistent masks ``m_0..m_k`` the class mass on their meet is
    solved first from ``y(v)`` and the already-known masses of the strictly
    less ambiguous neighbours, then each ``x([v]_{m_l})`` follows by
    subtraction.
    """
    y = np.asarray(y, dtype=np.float64)
    q = _check_q(q, alphabet.n)
    if y.shape != (alphabet.size,):
        raise IdentifiabilityError(f"y needs {alphabet.size} entries, got shape {y.shape}")
    t_idx = alphabet.index_of(tau)
    k = len(alphabet.values)
    n = alphabet.n
    states = alphabet.states()
    masks = mask_array(n)
    support = [i for i in range(len(masks)) if q[i] > 0]
    weights = k ** np.arange(n - 1, -1, -1)

    # consistent[v] = indices (into masks) of support masks with v == tau off-mask
    is_tau = states == t_idx
    consistent = [
        [mi for mi in support if np.all(is_tau[v] | masks[mi].astype(bool))]
        for v in range(alphabet.size)
    ]
    order = sorted(range(alphabet.size), key=lambda v: len(consistent[v]))

    # known[(mask_index, v)] = x([v]_m) where v is the tau-filled class member
    known: dict[tuple[int, int], float] = {}
    for v0 in order:
        group = consistent[v0]
        if not group:
            continue
        meet = np.bitwise_and.reduce(masks[group], axis=0)
        q_total = 0.0
        corrections = []
        for mi in group:
            free = np.flatnonzero((meet == 0) & (masks[mi] == 1))
            s = 0.0
            if free.size:
                base = states[v0].copy()
                for combo in itertools.product(range(k), repeat=free.size):
                    base[free] = combo
                    v = int(base @ weights)
                    if v == v0:
                        continue
                    s += known[(mi, v)]
            corrections.append(s)
            q_total += q[mi]
        meet_mass = (y[v0] + sum(q[mi] * s for mi, s in zip(group, corrections))) / q_total
        for mi, s in zip(group, corrections):
            known[(mi, v0)] = meet_mass - s

    table = MarginalTable(alphabet)
    for mi in support:
        mask = masks[mi]
        reps = _class_representatives(alphabet, states, mask, t_idx)
        cls: dict[tuple, float] = {}
        for v in range(alphabet.size):
            key = tuple(alphabet.values[j] if b else None for j, b in zip(states[v], mask))
            cls[key] = known[(mi, int(reps[v]))]
        table.masses[tuple(int(b) for b in mask)] = cls

    _check_consistency(y, q, alphabet, t_idx, masks, support, consistent, known, table, tol)
    return table


def _check_consistency(y, q, alphabet, t_idx, masks, support, consistent, known, table, tol):
    scale = max(1.0, float(np.abs(y).sum()))
    for v in range(alphabet.size):
        recon = sum(q[mi] * known[(mi, v)] for mi in consistent[v])
        if abs(recon - y[v]) > tol * scale:
            raise InconsistentObservationError(
                f"y is not in the range of T: residual {abs(recon - y[v]):.3e} at state "
                f"{alphabet.state_values(v)}",
                alphabet.state_values(v),
            )
    total = float(y.sum())
    for mi in support:
        mass = sum(table.masses[tuple(int(b) for b in masks[mi])].values())
        if abs(mass - total) > tol * scale:
            raise InconsistentObservationError(
                f"marginals under mask {tuple(masks[mi])} sum to {mass}, expected {total}",
                alphabet.state_values(0),
            )
    # Marginals of two masks must coarsen to the same marginal on their meet.
    states = alphabet.states()
    for a, b in itertools.combinations(support, 2):
        meet_reps = _class_representatives(alphabet, states, masks[a] & masks[b], 0)
        coarse = []
        for mi in (a, b):
            reps = np.unique(_class_representatives(alphabet, states, masks[mi], t_idx))
            mass = np.array([known[(mi, int(r))] for r in reps])
            coarse.append(np.bincount(meet_reps[reps], weights=mass, minlength=alphabet.size))
        bad = np.flatnonzero(np.abs(coarse[0] - coarse[1]) > tol * scale)
        if bad.size:
            raise InconsistentObservationError(
                f"marginals under masks {tuple(masks[a])} and {tuple(masks[b])} disagree",
                alphabet.state_values(int(bad[0])),
            )


@dataclass
class Uniqueness:
    """Verdict on ``{p >= 0 : T p = y}``.

    ``witnesses`` holds two distinct feasible points when the solution is not
    unique; ``spread`` is the largest coordinate-wise max - min over the set.
    """

    unique: bool
    solution: np.ndarray | None
    witnesses: tuple[np.ndarray, np.ndarray] | None
    spread: float


def unique_nonneg_solution(T, y, tol: float = 1e-8, coords: Sequence[int] | None = None) -> Uniqueness:
    """Decide uniqueness by min/max-ing each coordinate over the feasible set."""
    A = np.asarray(getattr(T, "entries", T), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    try:
        lp = StandardFormLP(A, y)
    except InfeasibleError as exc:
        raise IdentifiabilityError(f"infeasible: {exc}") from exc
    base = lp.feasible_point()
    n = A.shape[1]
    spread = 0.0
    witnesses = None
    for i in coords if coords is not None else range(n):
        e = np.zeros(n)
        e[i] = 1.0
        hi = lp.maximize(e)
        if hi.status == "unbounded":
            return Uniqueness(False, None, (hi.x, hi.x + hi.ray), np.inf)
        lo = lp.minimize(e)
        gap = hi.value - lo.value
        if gap > spread:
            spread = gap
            witnesses = (lo.x, hi.x)
    if spread > tol:
        return Uniqueness(False, None, witnesses, spread)
    return Uniqueness(True, base, None, spread)


def augment_alphabet(q, alphabet: Alphabet) -> tuple[Alphabet, TransitionMatrix]:
    """Add the reserved symbol ``PSI`` to P and build ``T'`` with fill ``PSI``."""
    bigger = Alphabet(alphabet.values + (PSI,), alphabet.n, alphabet.limit)
    return bigger, build_transition(q, bigger, PSI)


def embed_states(alphabet: Alphabet, bigger: Alphabet) -> np.ndarray:
    """Indices in ``bigger``'s state order of the states of ``alphabet``."""
    return bigger.flat(alphabet.states())


def augmented_uniqueness(q, alphabet: Alphabet, p_star, tol: float = 1e-8) -> Uniqueness:
    """Uniqueness when missing entries are flagged, i.e. fill ``PSI`` outside P.

    Candidate distributions are restricted to put zero mass on states that
    contain ``PSI``; the returned solution/witnesses live on the original I.
    """
    bigger, T_aug = augment_alphabet(q, alphabet)
    cols = embed_states(alphabet, bigger)
    p_ext = np.zeros(bigger.size)
    p_ext[cols] = np.asarray(p_star, dtype=np.float64)
    y = T_aug.entries @ p_ext
    return unique_nonneg_solution(T_aug.entries[:, cols], y, tol)

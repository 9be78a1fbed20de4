"""Finite Markov chain primitives.

Validation, ergodicity, stationary distributions, sampling, total variation
distances and the pair distributions of consecutive states ``(X_{k-1}, X_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import gcd
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    LengthMismatch,
    NegativeEntry,
    NoConvergence,
    NotErgodic,
    RowSumMismatch,
)

ROW_SUM_TOL = 1e-12
DIRECT_SOLVE_MAX_N = 64


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """Row-stochastic transition matrix ``p[i, j] = P(i -> j)``.

    Build through :func:`validate_stochastic`; the array is read-only.
    """

    p: np.ndarray

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @cached_property
    def cdf(self) -> np.ndarray:
        """Row-wise cumulative sums with the tail pinned to exactly 1."""
        cdf = np.cumsum(self.p, axis=1)
        for i in range(self.n):
            last = np.flatnonzero(self.p[i] > 0)[-1]
            cdf[i, last:] = 1.0
        cdf.setflags(write=False)
        return cdf

    @cached_property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.p))


def validate_stochastic(raw, tol=ROW_SUM_TOL, renormalize=False) -> StochasticMatrix:
    """Certify ``raw`` as a row-stochastic matrix.

    Raises
    ------
    NegativeEntry
        If any entry is negative.
    RowSumMismatch
        If a row sum deviates from 1 by more than ``tol`` and
        ``renormalize`` is off.
    """
    p = np.array(raw, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("matrix has non-finite entries")
    neg = np.argwhere(p < 0)
    if len(neg):
        i, j = neg[0]
        raise NegativeEntry(int(i), int(j), float(p[i, j]))
    sums = p.sum(axis=1)
    if renormalize:
        if np.any(sums <= 0):
            raise RowSumMismatch(int(np.flatnonzero(sums <= 0)[0]), 0.0)
        p = p / sums[:, None]
    else:
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if len(bad):
            raise RowSumMismatch(int(bad[0]), float(sums[bad[0]]))
    return StochasticMatrix(_frozen(p))


def _as_matrix(P) -> np.ndarray:
    return P.p if isinstance(P, StochasticMatrix) else np.asarray(P, dtype=float)


class Ergodicity(NamedTuple):
    irreducible: bool
    aperiodic: bool


def _component_period(adj, members) -> int:
    """Period of one strongly connected class, 0 if it carries no cycle."""
    inside = np.zeros(adj.shape[0], dtype=bool)
    inside[members] = True
    level = {members[0]: 0}
    frontier = [members[0]]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u] & inside):
                if v not in level:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    for u in members:
        for v in np.flatnonzero(adj[u] & inside):
            g = gcd(g, level[u] + 1 - level[v])
    return g


def is_irreducible(A) -> bool:
    """Strong connectivity of the graph of positive entries."""
    adj = _as_matrix(A) > 0
    ncomp, _ = connected_components(adj, directed=True, connection="strong")
    return ncomp == 1


def ergodicity_check(P) -> Ergodicity:
    """Irreducibility and aperiodicity from the support graph.

    A chain is reported aperiodic when every strongly connected class that
    contains a cycle has period 1.
    """
    adj = _as_matrix(P) > 0
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    aperiodic = True
    for c in range(ncomp):
        members = list(np.flatnonzero(labels == c))
        period = _component_period(adj, members)
        if period > 1:
            aperiodic = False
            break
    return Ergodicity(irreducible=ncomp == 1, aperiodic=aperiodic)


def require_ergodic(P):
    erg = ergodicity_check(P)
    if not (erg.irreducible and erg.aperiodic):
        raise NotErgodic(
            f"chain is not ergodic (irreducible={erg.irreducible}, aperiodic={erg.aperiodic})"
        )


def stationary_distribution(P, tol=1e-12, max_iter=1_000_000) -> np.ndarray:
    """Invariant distribution ``q`` with ``q^T P = q^T``.

    Dense linear solve for ``n <= 64``, power iteration on ``P^T`` above.

    Raises
    ------
    NotErgodic
        If the chain is reducible or periodic.
    NoConvergence
        If the l1 residual stays above ``tol``.
    """
    p = _as_matrix(P)
    require_ergodic(p)
    n = p.shape[0]
    if n <= DIRECT_SOLVE_MAX_N:
        a = p.T - np.eye(n)
        a[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        q = np.linalg.solve(a, b)
        q = np.abs(q) / np.abs(q).sum()
        for _ in range(3):
            if np.abs(q @ p - q).sum() <= tol:
                break
            q = q @ p
            q /= q.sum()
    else:
        q = np.full(n, 1.0 / n)
        pt = p.T.copy()
        for it in range(max_iter):
            nq = pt @ q
            nq /= nq.sum()
            if np.abs(nq - q).sum() <= tol:
                q = nq
                break
            q = nq
        else:
            raise NoConvergence("stationary power iteration did not converge", max_iter)
    resid = np.abs(q @ p - q).sum()
    if resid > tol:
        raise NoConvergence(f"stationary residual {resid:.3e} above tol {tol:.1e}")
    return q


def sample_next(P, i, rng) -> int:
    """Draw the successor of state ``i`` by inverse-CDF sampling over row ``i``."""
    if not isinstance(P, StochasticMatrix):
        P = validate_stochastic(P)
    u = rng.random()
    return int(np.searchsorted(P.cdf[i], u, side="right"))


def sample_next_many(P: StochasticMatrix, states, rng) -> np.ndarray:
    """Vectorised :func:`sample_next` for an array of current states."""
    u = rng.random(len(states))
    return (P.cdf[states] <= u[:, None]).sum(axis=1)


def tv_distance(a, b) -> float:
    """Total variation distance ``0.5 * sum |a - b|`` of two distributions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return 0.5 * float(np.abs(a - b).sum())


def stationary_pair_distribution(P) -> np.ndarray:
    """``mu_bar[i, j] = q_i p_ij`` with ``q`` the stationary distribution."""
    p = _as_matrix(P)
    q = stationary_distribution(p)
    return q[:, None] * p


def exact_pair_distribution(P, x0, k) -> np.ndarray:
    """Law of ``(X_{k-1}, X_k)`` given ``X_0 = x0``, from matrix powers."""
    p = _as_matrix(P)
    if k < 1:
        raise ValueError("k must be >= 1")
    nu = np.linalg.matrix_power(p, k - 1)[x0]
    return nu[:, None] * p


def empirical_pair_distribution(P, x0, k, trials, rng) -> np.ndarray:
    """Monte-Carlo estimate of the law of ``(X_{k-1}, X_k)`` from ``X_0 = x0``."""
    if k < 1 or trials < 1:
        raise ValueError("need k >= 1 and trials >= 1")
    if not isinstance(P, StochasticMatrix):
        P = validate_stochastic(P)
    x = np.full(trials, x0, dtype=np.int64)
    prev = x
    for _ in range(k):
        prev = x
        x = sample_next_many(P, x, rng)
    counts = np.zeros((P.n, P.n))
    np.add.at(counts, (prev, x), 1.0)
    return counts / trials


def mixing_time(P, eps=0.25, kmax=100_000) -> int:
    """Smallest ``k`` with ``max_x ||P^k(x, .) - q||_TV <= eps``."""
    p = _as_matrix(P)
    q = stationary_distribution(p)
    pk = np.eye(p.shape[0])
    for k in range(1, kmax + 1):
        pk = pk @ p
        if 0.5 * np.abs(pk - q).sum(axis=1).max() <= eps:
            return k
    raise NoConvergence(f"chain did not mix to {eps} within {kmax} steps", kmax)


def fit_geometric_decay(ks, distances):
    """Least-squares fit of ``log d_k = log C + k log alpha``.

    Returns ``(C, alpha, r_squared)``.
    """
    ks = np.asarray(ks, dtype=float)
    logd = np.log(np.asarray(distances, dtype=float))
    slope, intercept = np.polyfit(ks, logd, 1)
    fitted = intercept + slope * ks
    ss_res = float(((logd - fitted) ** 2).sum())
    ss_tot = float(((logd - logd.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(intercept)), float(np.exp(slope)), r2


def check_detailed_balance(P, pi, tol=1e-12) -> bool:
    """True iff ``max |pi_i p_ij - pi_j p_ji| <= tol``."""
    p = _as_matrix(P)
    flow = np.asarray(pi, dtype=float)[:, None] * p
    return bool(np.abs(flow - flow.T).max() <= tol)


# -- matrix text format -------------------------------------------------------

def format_matrix(a) -> str:
    """``n`` on the first line, then ``n`` rows of 17-significant-digit values."""
    a = _as_matrix(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix text format holds square matrices only")
    lines = [str(a.shape[0])]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in a]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix text")
    n = int(lines[0])
    rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"expected {n} rows of {n} values")
    return np.array(rows, dtype=float).reshape(n, n)

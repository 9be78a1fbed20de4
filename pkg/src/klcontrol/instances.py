"""Random problem generators for tests, benchmarks and fuzzing.

Supports are Erdos-Renyi graphs made strongly connected by a random
Hamiltonian cycle; each state keeps a self-loop with probability 1/2 (and
at least one state always does), which makes the chain aperiodic.
"""

from __future__ import annotations

import numpy as np

from .klproblem import KLProblem
from .markov import validate_stochastic


def random_support(rng, n, density=0.3, self_loop_prob=0.5) -> np.ndarray:
    adj = rng.random((n, n)) < density
    np.fill_diagonal(adj, rng.random(n) < self_loop_prob)
    if n > 1:
        perm = rng.permutation(n)
        adj[perm, np.roll(perm, -1)] = True
    if not adj.diagonal().any():
        i = rng.integers(n)
        adj[i, i] = True
    return adj


def random_chain(rng, n, density=0.3, self_loop_prob=0.5):
    """Random ergodic chain on ``n`` states with uniform(0, 1] row weights."""
    adj = random_support(rng, n, density, self_loop_prob)
    w = np.where(adj, 1.0 - rng.random((n, n)), 0.0)
    return validate_stochastic(w / w.sum(axis=1, keepdims=True))


def random_reversible_chain(rng, n, density=0.4, lazy=None):
    """Chain ``q_ij = w_ij / sum_j w_ij`` from a random symmetric weight matrix.

    Such chains satisfy detailed balance with ``q_i ~ sum_j w_ij``. With
    ``lazy`` set, each state keeps probability ``lazy`` of staying put.
    """
    adj = random_support(rng, n, density, 1.0)
    adj = adj | adj.T
    w = np.triu(np.where(adj, 1.0 - rng.random((n, n)), 0.0))
    w = w + np.triu(w, 1).T
    p = w / w.sum(axis=1, keepdims=True)
    if lazy is not None:
        p = lazy * np.eye(n) + (1.0 - lazy) * p
    return validate_stochastic(p, tol=1e-12, renormalize=True)


def log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def random_problem(rng, n, density=0.3, cost_max=5.0, beta_range=(0.1, 10.0),
                   cost_shape="transition") -> KLProblem:
    """Random ergodic KL problem; costs uniform on ``[0, cost_max]``, beta log-uniform."""
    q = random_chain(rng, n, density)
    beta = float(log_uniform(rng, *beta_range))
    if cost_shape == "state":
        return KLProblem.from_state_costs(q, rng.uniform(0, cost_max, n), beta)
    c = rng.uniform(0, cost_max, (n, n))
    if cost_shape == "symmetric":
        c = np.triu(c) + np.triu(c, 1).T
        return KLProblem.from_symmetric_costs(q, c, beta)
    return KLProblem(q, c, beta)


def random_rank_one_problem(rng, n, cost_max=5.0, beta_range=(0.1, 10.0)):
    """``q_ij = q_j`` with state costs; returns ``(problem, qvec, cstate)``."""
    qvec = rng.dirichlet(np.ones(n))
    qvec = np.maximum(qvec, 1e-3)
    qvec /= qvec.sum()
    cstate = rng.uniform(0, cost_max, n)
    beta = float(log_uniform(rng, *beta_range))
    q = validate_stochastic(np.tile(qvec, (n, 1)))
    return KLProblem.from_state_costs(q, cstate, beta), qvec, cstate


def random_diagonal(rng, n, lo=0.01, hi=1.0) -> np.ndarray:
    return log_uniform(rng, lo, hi, n)

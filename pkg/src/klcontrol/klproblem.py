"""Kullback-Leibler control problems and their exact solution.

A problem is an ergodic chain ``q``, a transition cost matrix ``c`` (row =
departure state) and a weight ``beta``. Its solution is the Perron pair of
``H = exp(-beta c) * q``: the optimal policy, value function and average
cost follow in closed form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import eigen
from .errors import (
    BetaNonPositive,
    LengthMismatch,
    NoConvergence,
    NotIrreducible,
    NotReversible,
    NotStateCost,
    NotSymmetric,
    ResidualTooLarge,
)
from .markov import (
    StochasticMatrix,
    check_detailed_balance,
    is_irreducible,
    require_ergodic,
    stationary_distribution,
    validate_stochastic,
)
from .schedules import Constant, StepSchedule

log = logging.getLogger(__name__)

UNIT_SUM = "unit_sum"
LAMBDA_SUM = "lambda_sum"
COST_SHAPES = ("transition", "state", "symmetric")
SHAPE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KLProblem:
    """Ergodic KL control problem ``(q, c, beta)``.

    ``c[i, j]`` is the cost of the jump ``i -> j``. ``cost_shape`` records
    whether ``c`` was built from state costs (``c[i, j] = c_i``, charged
    at the departure state) or is symmetric; it gates the detailed-balance
    formulas only.
    """

    q: StochasticMatrix
    c: np.ndarray
    beta: float
    cost_shape: str = "transition"

    def __post_init__(self):
        q = self.q if isinstance(self.q, StochasticMatrix) else validate_stochastic(self.q)
        object.__setattr__(self, "q", q)
        c = np.array(self.c, dtype=float)
        if c.shape != (q.n, q.n):
            raise LengthMismatch(f"cost matrix shape {c.shape} does not match n = {q.n}")
        if not np.all(np.isfinite(c)):
            raise ValueError("costs must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        if not self.beta > 0:
            raise BetaNonPositive(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "beta", float(self.beta))
        if self.cost_shape not in COST_SHAPES:
            raise ValueError(f"cost_shape must be one of {COST_SHAPES}")
        if self.cost_shape == "state" and not is_state_cost(c):
            raise NotStateCost("cost matrix rows are not constant")
        if self.cost_shape == "symmetric" and not is_symmetric_cost(c):
            raise NotSymmetric("cost matrix is not symmetric")
        require_ergodic(q)

    @property
    def n(self) -> int:
        return self.q.n

    @classmethod
    def from_state_costs(cls, q, cstate, beta):
        cstate = np.asarray(cstate, dtype=float)
        c = np.repeat(cstate[:, None], len(cstate), axis=1)
        return cls(q, c, beta, "state")

    @classmethod
    def from_symmetric_costs(cls, q, c, beta):
        return cls(q, c, beta, "symmetric")


def is_state_cost(c) -> bool:
    c = np.asarray(c)
    return bool(np.all(np.abs(c - c[:, :1]) <= SHAPE_TOL * (1 + np.abs(c[:, :1]))))


def is_symmetric_cost(c) -> bool:
    c = np.asarray(c)
    return bool(np.all(np.abs(c - c.T) <= SHAPE_TOL * (1 + np.abs(c))))


@dataclass(frozen=True, eq=False)
class Eigenpair:
    """Positive Perron vector ``z`` and eigenvalue ``lam`` with a declared scale."""

    z: np.ndarray
    lam: float
    normalization: str = UNIT_SUM
    iterations: int | None = field(default=None, compare=False)
    residual: float | None = field(default=None, compare=False)

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        if self.normalization not in (UNIT_SUM, LAMBDA_SUM):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "z": self.z.tolist(), "normalization": self.normalization}

    @classmethod
    def from_dict(cls, d: dict) -> "Eigenpair":
        return cls(np.asarray(d["z"], dtype=float), float(d["lambda"]), d["normalization"])


def build_h(problem: KLProblem) -> np.ndarray:
    """``h_ij = exp(-beta c_ij) q_ij``; zero pattern equals that of ``q``."""
    h = np.exp(-problem.beta * problem.c) * problem.q.p
    h[problem.q.p == 0] = 0.0
    h.setflags(write=False)
    return h


def perron_residual(H, z, lam) -> float:
    z = np.asarray(z)
    return float(np.abs(H @ z - lam * z).sum() / np.abs(z).sum())


def _require_irreducible(H):
    if not is_irreducible(H):
        raise NotIrreducible("H is reducible; the Perron vector is not unique")


def solve_power(H, tol=1e-10, max_iter=1_000_000, z0=None) -> Eigenpair:
    """Perron pair by the normalised power method ``z <- Hz / ||Hz||_1``.

    Stops when the l1 residual ``||Hz - lam z|| / ||z||`` falls to
    ``tol * min(1, lam)``, with ``lam = ||Hz||_1 / ||z||_1``; the factor keeps
    the test meaningful when ``lam`` is tiny.
    """
    H = np.asarray(H, dtype=float)
    _require_irreducible(H)
    n = H.shape[0]
    z = np.full(n, 1.0 / n) if z0 is None else np.asarray(z0, float) / np.sum(z0)
    for it in range(1, max_iter + 1):
        y = H @ z
        lam = y.sum()
        resid = np.abs(y - lam * z).sum()
        if resid <= tol * min(1.0, lam):
            return Eigenpair(z, float(lam), UNIT_SUM, iterations=it, residual=float(resid))
        z = y / lam
    raise NoConvergence(f"power method did not reach tol {tol:.1e} (residual {resid:.2e})", max_iter)


def solve_relaxed(H, schedule: StepSchedule = Constant(0.5), tol=1e-10, max_iter=1_000_000,
                  z0=None) -> Eigenpair:
    """Perron pair by the relaxed iteration ``z <- z + gamma_k (Hz - z)``.

    The iterate is rescaled to unit sum each step, which leaves its
    direction (and hence the limit) unchanged. Stopping rule as in
    :func:`solve_power`.
    """
    H = np.asarray(H, dtype=float)
    _require_irreducible(H)
    n = H.shape[0]
    z = np.full(n, 1.0 / n) if z0 is None else np.asarray(z0, float) / np.sum(z0)
    block = 4096
    for start in range(1, max_iter + 1, block):
        gammas = schedule.gains(np.arange(start, min(start + block, max_iter + 1)))
        for offset, g in enumerate(gammas):
            y = H @ z
            lam = y.sum()
            resid = np.abs(y - lam * z).sum()
            if resid <= tol * min(1.0, lam):
                return Eigenpair(z, float(lam), UNIT_SUM, iterations=start + offset,
                                 residual=float(resid))
            z = z + g * (y - z)
            z /= z.sum()
    raise NoConvergence(f"relaxed power method did not reach tol {tol:.1e}", max_iter)


def relaxed_power_errors(H, schedule: StepSchedule, iterations, reference: Eigenpair,
                         z0=None) -> np.ndarray:
    """Error trace ``||z_k/||z_k|| - z*/||z*|| ||_1`` of the relaxed iteration.

    Entry ``k`` is the error after ``k`` iterations (entry 0 is the start).
    No rescaling is applied beyond overflow protection, so on problems with
    ``lam* = 1`` this is the plain relaxed power method.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    ref = reference.z / reference.z.sum()
    z = np.full(n, 1.0 / n) if z0 is None else np.array(z0, dtype=float)
    errs = np.empty(iterations + 1)
    errs[0] = np.abs(z / z.sum() - ref).sum()
    gammas = schedule.gains(np.arange(1, iterations + 1))
    for k in range(iterations):
        z = z + gammas[k] * (H @ z - z)
        s = z.sum()
        if not (1e-150 < s < 1e150):
            z /= s
            s = 1.0
        errs[k + 1] = np.abs(z / s - ref).sum()
    return errs


def solve_perron_direct(H) -> Eigenpair:
    """Perron pair from the full spectrum, for badly separated problems.

    ``lam*`` is the eigenvalue of largest real part (the spectral radius of
    an irreducible nonnegative matrix); ``z*`` spans the null space of
    ``H - lam* I``.
    """
    H = np.asarray(H, dtype=float)
    _require_irreducible(H)
    vals = eigen.eigvals(H)
    lam = float(vals.real.max())
    _, _, vt = np.linalg.svd(H - lam * np.eye(H.shape[0]))
    z = np.abs(vt[-1])
    z /= z.sum()
    return Eigenpair(z, lam, UNIT_SUM, residual=perron_residual(H, z, lam))


def renormalize(e: Eigenpair, target: str) -> Eigenpair:
    """Rescale ``z`` so that ``||z||_1 = 1`` (unit sum) or ``||z||_1 = lam``."""
    scale = 1.0 if target == UNIT_SUM else e.lam
    if target not in (UNIT_SUM, LAMBDA_SUM):
        raise ValueError(f"unknown normalization {target!r}")
    z = e.z * (scale / e.z.sum())
    return Eigenpair(z, e.lam, target, iterations=e.iterations, residual=e.residual)


def optimal_policy(problem: KLProblem, e: Eigenpair, tol=1e-8, return_defect=False):
    """Optimal controlled dynamics ``p_ij = h_ij z_j / (lam z_i)``.

    Rows are renormalised to sum to exactly one; the largest pre-renormalisation
    row defect is logged (and returned with ``return_defect=True``).

    Raises
    ------
    ResidualTooLarge
        If ``e`` is not a Perron pair of the problem's ``H`` within ``tol``.
    """
    H = build_h(problem)
    resid = perron_residual(H, e.z, e.lam)
    if resid > tol:
        raise ResidualTooLarge(f"eigenpair residual {resid:.3e} exceeds {tol:.1e}")
    p = H * e.z[None, :] / (e.lam * e.z[:, None])
    sums = p.sum(axis=1)
    defect = float(np.abs(sums - 1.0).max())
    log.debug("optimal policy row-sum defect %.3e", defect)
    policy = validate_stochastic(p / sums[:, None])
    return (policy, defect) if return_defect else policy


def value_function(e: Eigenpair, beta) -> np.ndarray:
    """``Phi_i = -ln(z_i) / beta`` with ``z`` rescaled to unit sum."""
    z = renormalize(e, UNIT_SUM).z
    return -np.log(z) / beta


def average_cost(lam, beta) -> float:
    """Optimal cost per transition ``-ln(lam) / beta``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return -float(np.log(lam)) / beta


def normalize_costs(problem: KLProblem, tol=1e-12) -> KLProblem:
    """Shift all costs by ``ln(lam*) / beta`` so that the new ``rho(H)`` is 1.

    The shift multiplies ``H`` by ``1 / lam*`` and leaves ``z*`` and the
    optimal policy unchanged.
    """
    lam = solve_power(build_h(problem), tol=tol).lam
    delta = float(np.log(lam)) / problem.beta
    return KLProblem(problem.q, problem.c + delta, problem.beta, problem.cost_shape)


def rank_one_solution(qvec, cstate, beta, normalization=UNIT_SUM) -> Eigenpair:
    """Closed form for ``q_ij = q_j`` with state costs.

    ``H_ij = exp(-beta c_i) q_j`` has rank one, ``lam* = sum_j q_j exp(-beta c_j)``
    and ``z*_i = exp(-beta c_i)``.
    """
    qvec = np.asarray(qvec, dtype=float)
    w = np.exp(-beta * np.asarray(cstate, dtype=float))
    lam = float(qvec @ w)
    return renormalize(Eigenpair(w, lam, UNIT_SUM), normalization)


def controlled_stationary(problem: KLProblem, e: Eigenpair, case=None) -> np.ndarray:
    """Invariant law of the optimal dynamics for reversible ``q``.

    ``case="state"``: ``p_i ~ q_i exp(beta c_i) z_i**2``;
    ``case="symmetric"``: ``p_i ~ q_i z_i**2``. Defaults to the problem's
    declared cost shape.
    """
    case = case or problem.cost_shape
    qstat = stationary_distribution(problem.q)
    if not check_detailed_balance(problem.q, qstat, tol=1e-12):
        raise NotReversible("uncontrolled dynamics violate detailed balance")
    z = renormalize(e, UNIT_SUM).z
    if case == "state":
        if not is_state_cost(problem.c):
            raise NotStateCost("costs depend on the arrival state")
        # exp(beta c_i) z_i^2 is evaluated in log space to survive large costs
        logw = np.log(qstat) + problem.beta * problem.c[:, 0] + 2 * np.log(z)
    elif case == "symmetric":
        if not is_symmetric_cost(problem.c):
            raise NotSymmetric("cost matrix is not symmetric")
        logw = np.log(qstat) + 2 * np.log(z)
    else:
        raise ValueError("case must be 'state' or 'symmetric'")
    w = np.exp(logw - logw.max())
    return w / w.sum()


def kl_bounds(problem: KLProblem):
    """``(lam_min, M)`` over realisable transitions (``q_ij > 0``).

    ``lam_min = min exp(-beta c) / 2`` and ``M = max exp(-beta c)``.
    """
    w = np.exp(-problem.beta * problem.c)[problem.q.p > 0]
    return float(w.min()) / 2.0, float(w.max())


def policy_average_cost(problem: KLProblem, p) -> float:
    """Long-run cost per step of policy ``p``: transition cost plus KL control cost.

    Terms with ``p_ij = 0`` contribute nothing.
    """
    p = p.p if isinstance(p, StochasticMatrix) else np.asarray(p, dtype=float)
    q = problem.q.p
    if np.any((p > 0) & (q == 0)):
        raise ValueError("policy is not absolutely continuous with respect to q")
    pi = stationary_distribution(p)
    pos = p > 0
    step = np.zeros_like(p)
    step[pos] = p[pos] * (problem.c[pos] + np.log(p[pos] / q[pos]) / problem.beta)
    return float(pi @ step.sum(axis=1))


# -- problem file -------------------------------------------------------------

def problem_to_dict(problem: KLProblem) -> dict:
    return {
        "n": problem.n,
        "q": problem.q.p.tolist(),
        "c": problem.c.tolist(),
        "beta": problem.beta,
        "cost_shape": problem.cost_shape,
    }


def problem_from_dict(d: dict) -> KLProblem:
    n = int(d["n"])
    q = np.asarray(d["q"], dtype=float)
    c = np.asarray(d["c"], dtype=float)
    if q.shape != (n, n) or c.shape != (n, n):
        raise LengthMismatch(f"declared n = {n} does not match matrix shapes")
    return KLProblem(validate_stochastic(q), c, float(d["beta"]), d.get("cost_shape", "transition"))

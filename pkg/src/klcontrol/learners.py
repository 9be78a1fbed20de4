"""Stochastic approximation learners for the Perron pair of ``H``.

* KL-learning: single-component update of ``z`` with ``lam`` tracking ``||z||_1``.
* Projected KL-learning: the same with ``lam`` floored at ``lam_min``.
* Z-learning: the ``rho(H) = 1`` special case without ``lam``.
* A Markov-chain-driven stochastic gradient method, as a simpler relative.

The one-step functions are plain Python and serve as readable references;
:func:`run_learner` drives compiled kernels that perform the same update
from the same random stream.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels
from .errors import InconsistentState, InvalidSchedule, StateCorrupt
from .klproblem import Eigenpair, KLProblem, kl_bounds
from .markov import StochasticMatrix, sample_next, stationary_distribution, validate_stochastic
from .schedules import StepSchedule

log = logging.getLogger(__name__)

KL = "kl"
KL_PROJECTED = "kl-projected"
Z = "z"
ALGORITHMS = (KL, KL_PROJECTED, Z)
_ALGO_CODE = {KL: _kernels.KL, KL_PROJECTED: _kernels.KL_PROJECTED, Z: _kernels.Z}

RESYNC_EVERY = 10_000
DEFAULT_STRIDE = 100
CHUNK = 1 << 16


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; every run is reproducible from its seed."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True, eq=False)
class LearnerState:
    z: np.ndarray
    lam: float
    x: int
    k: int = 0
    projections: int = 0


def _weight(problem: KLProblem, x, y) -> float:
    return float(np.exp(-problem.beta * problem.c[x, y]))


def _advance(state: LearnerState, increment, y, lam=None, projected=False) -> LearnerState:
    z = state.z.copy()
    z[state.x] += increment
    if lam is None:
        lam = state.lam + increment
    if not (np.isfinite(z[state.x]) and np.isfinite(lam)):
        raise StateCorrupt("non-finite learner state", state.k + 1)
    return LearnerState(z, lam, y, state.k + 1, state.projections + int(projected))


def kl_delta(problem: KLProblem, z, lam, x, y) -> float:
    """``exp(-beta c(y|x)) z(y) / lam - z(x)``."""
    return _weight(problem, x, y) * z[y] / lam - z[x]


def kl_step(state: LearnerState, problem: KLProblem, gamma, rng) -> LearnerState:
    """One KL-learning step: draw ``y ~ q(.|x)``, move ``z(x)`` and ``lam`` by ``gamma * delta``."""
    y = sample_next(problem.q, state.x, rng)
    delta = kl_delta(problem, state.z, state.lam, state.x, y)
    new = _advance(state, gamma * delta, y)
    if new.z[state.x] <= 0:
        raise StateCorrupt(f"z({state.x}) became nonpositive", new.k)
    return new


def kl_projected_step(state: LearnerState, problem: KLProblem, gamma, rng,
                      lam_min=None) -> LearnerState:
    """KL-learning step with ``delta`` floored so that ``lam`` never drops below ``lam_min``."""
    if lam_min is None:
        lam_min = kl_bounds(problem)[0]
    y = sample_next(problem.q, state.x, rng)
    delta = kl_delta(problem, state.z, state.lam, state.x, y)
    floor = (lam_min - state.lam) / gamma
    if delta < floor:
        return _advance(state, gamma * floor, y, lam=lam_min, projected=True)
    return _advance(state, gamma * delta, y)


def z_step(state: LearnerState, problem: KLProblem, gamma, rng) -> LearnerState:
    """One Z-learning step; ``lam`` is carried as ``||z||_1`` for reporting only."""
    y = sample_next(problem.q, state.x, rng)
    delta = _weight(problem, state.x, y) * state.z[y] - state.z[state.x]
    return _advance(state, gamma * delta, y)


def initial_state(algo, problem: KLProblem, x0=0, z0=None, lam0=None) -> LearnerState:
    """Starting point of each algorithm.

    KL: ``z = 1/n``, ``lam = 1``. Projected KL: ``lam = 2 lam_min``,
    ``z = lam / n``. Z: ``z = 1``. Explicit ``z0``/``lam0`` must satisfy
    ``||z0||_1 = lam0`` (and ``lam0`` within ``[lam_min, nM]`` when projected).
    """
    n = problem.n
    lam_min, m_bound = kl_bounds(problem)
    if z0 is None:
        if algo == KL:
            lam0 = 1.0 if lam0 is None else lam0
        elif algo == KL_PROJECTED:
            lam0 = 2 * lam_min if lam0 is None else lam0
        elif algo == Z:
            lam0 = float(n) if lam0 is None else lam0
        else:
            raise ValueError(f"unknown algorithm {algo!r}")
        z0 = np.full(n, lam0 / n)
    z0 = np.array(z0, dtype=float)
    if z0.shape != (n,) or np.any(z0 <= 0):
        raise InconsistentState("z0 must be a positive vector of length n")
    if lam0 is None:
        lam0 = float(z0.sum())
    if algo != Z and abs(z0.sum() - lam0) > 1e-12 * max(1.0, lam0):
        raise InconsistentState(f"||z0||_1 = {z0.sum()!r} differs from lambda0 = {lam0!r}")
    if algo == KL_PROJECTED and not (lam_min <= lam0 <= n * m_bound):
        raise InconsistentState(f"lambda0 = {lam0} outside [{lam_min}, {n * m_bound}]")
    return LearnerState(z0, float(lam0), int(x0))


def normalized_error(z, reference: Eigenpair) -> np.ndarray:
    """``|| z/||z||_1 - z*/||z*||_1 ||_1`` row-wise for a stack of snapshots."""
    z = np.atleast_2d(z)
    ref = reference.z / reference.z.sum()
    return np.abs(z / z.sum(axis=1, keepdims=True) - ref).sum(axis=1)


CSV_HEADER = ("k", "t", "gamma", "lambda", "err_l1", "x", "projection_count")


@dataclass(eq=False)
class Trajectory:
    """Snapshots ``(k, gamma_k, t_k, z_k, lam_k, x_k)`` of a learner run."""

    algo: str
    seed: int
    schedule: dict
    k: np.ndarray
    gamma: np.ndarray
    t: np.ndarray
    lam: np.ndarray
    x: np.ndarray
    z: np.ndarray
    projection_count: np.ndarray
    err: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.k)

    @property
    def final_error(self) -> float | None:
        return None if self.err is None else float(self.err[-1])

    def to_csv(self, full_z=True) -> str:
        buf = io.StringIO()
        n = self.z.shape[1]
        cols = list(CSV_HEADER) + ([f"z{i}" for i in range(n)] if full_z else [])
        buf.write(",".join(cols) + "\n")
        err = self.err if self.err is not None else np.full(len(self.k), np.nan)
        for r in range(len(self.k)):
            row = [str(int(self.k[r])), f"{self.t[r]:.17g}", f"{self.gamma[r]:.17g}",
                   f"{self.lam[r]:.17g}", f"{err[r]:.17g}", str(int(self.x[r])),
                   str(int(self.projection_count[r]))]
            if full_z:
                row += [f"{v:.17g}" for v in self.z[r]]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def metadata(self) -> dict:
        return {"algo": self.algo, "seed": self.seed, "schedule": self.schedule,
                "snapshots": len(self), "final_error": self.final_error, **self.meta}


def run_learner(algo, problem: KLProblem, schedule: StepSchedule, steps, stride=DEFAULT_STRIDE,
                seed=0, reference: Eigenpair | None = None, x0=0, z0=None, lam0=None,
                resync=RESYNC_EVERY) -> Trajectory:
    """Run a learner for ``steps`` steps and record every ``stride``-th state.

    The initial state (``k = 0``) and the final step are always recorded.
    With a ``reference`` Perron pair the normalised l1 error is attached.

    Raises
    ------
    StateCorrupt
        On non-finite or nonpositive ``z`` (KL variants), on leaving the
        invariant set ``K`` (projected variant), or on bookkeeping drift
        ``|lam - ||z||_1| > 1e-9`` at a re-sync point.
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    if steps < 0 or stride < 1:
        raise ValueError("need steps >= 0 and stride >= 1")
    first_gain = float(schedule.gains(1)) if steps else 0.0
    if steps and not (0 < first_gain <= 1):
        raise InvalidSchedule(f"gain gamma_1 = {first_gain} outside (0, 1]")
    state = initial_state(algo, problem, x0, z0, lam0)
    lam_min, m_bound = kl_bounds(problem)
    weight = np.ascontiguousarray(np.exp(-problem.beta * problem.c))
    cdf = np.ascontiguousarray(problem.q.cdf)
    rng = make_rng(seed)
    code = _ALGO_CODE[algo]

    z = state.z.copy()
    lam, x = state.lam, state.x
    ks, gs, ts, lams, xs, zs, projs = [0], [0.0], [0.0], [lam], [x], [z.copy()], [0]
    proj, max_drift, t_done, k_done = 0, 0.0, 0.0, 0
    status = _kernels.OK
    while k_done < steps:
        m = min(CHUNK, steps - k_done)
        uniforms = rng.random(m)
        gammas = schedule.gains(np.arange(k_done + 1, k_done + m + 1))
        cap = m // stride + 2
        snap_k = np.empty(cap, np.int64)
        snap_lam = np.empty(cap)
        snap_x = np.empty(cap, np.int64)
        snap_z = np.empty((cap, problem.n))
        snap_proj = np.empty(cap, np.int64)
        lam, x, done, nsnap, proj, max_drift, status = _kernels.learner_chunk(
            code, z, lam, x, weight, cdf, uniforms, gammas, k_done, lam_min, m_bound,
            stride, resync if algo != Z else 0, k_done + m == steps,
            snap_k, snap_lam, snap_x, snap_z, snap_proj, proj, max_drift)
        tcum = t_done + np.cumsum(gammas[:done])
        idx = snap_k[:nsnap] - k_done - 1
        ks.extend(snap_k[:nsnap].tolist())
        gs.extend(gammas[idx].tolist())
        ts.extend(tcum[idx].tolist())
        lams.extend(snap_lam[:nsnap].tolist())
        xs.extend(snap_x[:nsnap].tolist())
        zs.extend(snap_z[:nsnap])
        projs.extend(snap_proj[:nsnap].tolist())
        t_done = float(tcum[-1]) if done else t_done
        k_done += done
        if status != _kernels.OK:
            break

    zs = np.array(zs)
    lams = np.array(lams)
    meta = {
        "lambda_min": lam_min,
        "lambda_min_scope": "transitions with q > 0",
        "M": m_bound,
        "steps_requested": int(steps),
        "steps_done": int(k_done),
        "projection_count": int(proj),
        "max_resync_drift": float(max_drift),
        "x0": int(state.x),
        "warnings": [],
    }
    traj = Trajectory(algo, seed, schedule.describe(), np.array(ks, np.int64), np.array(gs),
                      np.array(ts), lams, np.array(xs, np.int64), zs,
                      np.array(projs, np.int64), meta=meta)
    if reference is not None:
        traj.err = normalized_error(zs, reference)
        meta["reference_lambda"] = reference.lam
    if algo == Z:
        trend = float(np.log(zs[-1].sum() / zs[0].sum()))
        meta["log_norm_trend"] = trend
        # the norm settles from its initial scale even when rho(H) = 1, so
        # only drift over the second half of the run counts as divergence
        late = float(np.log(zs[-1].sum() / zs[len(zs) // 2].sum()))
        if status == _kernels.DIVERGED:
            meta["warnings"].append(f"z-learning diverged at step {k_done}: ||z||_1 = {lams[-1]:.3e}")
        elif abs(late) > np.log(10.0):
            meta["warnings"].append(f"z-learning norm drifted by factor {np.exp(late):.3e} "
                                    "over the second half of the run")
        if reference is not None and abs(reference.lam - 1.0) > 1e-8:
            meta["warnings"].append(f"z-learning assumes rho(H) = 1, problem has {reference.lam:.6g}")
        for w in meta["warnings"]:
            log.warning(w)
    elif status != _kernels.OK:
        what = {
            _kernels.NONPOSITIVE: "z became nonpositive or non-finite",
            _kernels.OUT_OF_K: "iterate left the invariant set K",
            _kernels.DRIFT: f"lambda drifted from ||z||_1 by more than {_kernels.DRIFT_TOL}",
        }[status]
        raise StateCorrupt(f"{what} at step {k_done}", k_done)
    elif status == _kernels.OK and algo != Z:
        final_drift = abs(lams[-1] - zs[-1].sum())
        meta["max_resync_drift"] = max(meta["max_resync_drift"], float(final_drift))
        if final_drift > _kernels.DRIFT_TOL:
            raise StateCorrupt(f"final lambda drift {final_drift:.3e}", k_done)
    return traj


def write_trajectory(traj: Trajectory, csv_path, full_z=True, extra_meta=None):
    """Write the trajectory CSV and a ``.meta.json`` sidecar next to it."""
    from pathlib import Path

    csv_path = Path(csv_path)
    csv_path.write_text(traj.to_csv(full_z=full_z))
    meta = traj.metadata()
    if extra_meta:
        meta.update(extra_meta)
    csv_path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# -- stochastic gradient ------------------------------------------------------

class QuadraticObjective(NamedTuple):
    """``h(t) = 0.5 (t - t*)^T A (t - t*)`` with symmetric positive definite ``A``."""

    A: np.ndarray
    theta_star: np.ndarray

    def grad(self, theta):
        return self.A @ (np.asarray(theta) - self.theta_star)

    def __call__(self, theta):
        d = np.asarray(theta) - self.theta_star
        return 0.5 * d @ self.A @ d


def sg_step(theta, h_grad: Callable, chainpair, gamma) -> np.ndarray:
    """Observe ``dh/dtheta^(x_k)`` and subtract it from coordinate ``x_{k-1}``."""
    prev, cur = chainpair
    theta = np.array(theta, dtype=float)
    theta[prev] -= gamma * h_grad(theta)[cur]
    return theta


@dataclass(eq=False)
class SGTrajectory:
    k: np.ndarray
    theta: np.ndarray
    seed: int


def run_sg(P, objective, theta0, schedule: StepSchedule, steps, seed=0, x0=0,
           stride=1000) -> SGTrajectory:
    """Drive :func:`sg_step` by a Markov chain for ``steps`` steps.

    Quadratic objectives run in a compiled loop; any other gradient oracle
    falls back to Python.
    """
    if not isinstance(P, StochasticMatrix):
        P = validate_stochastic(P)
    rng = make_rng(seed)
    theta = np.array(theta0, dtype=float)
    x = int(x0)
    ks, thetas = [0], [theta.copy()]
    done = 0
    fast = isinstance(objective, QuadraticObjective)
    cdf = np.ascontiguousarray(P.cdf)
    while done < steps:
        m = min(stride, steps - done)
        gammas = schedule.gains(np.arange(done + 1, done + m + 1))
        if fast:
            uniforms = rng.random(m)
            x = _kernels.sg_quadratic_chunk(theta, x, np.ascontiguousarray(objective.A, dtype=float),
                                            np.asarray(objective.theta_star, dtype=float), cdf,
                                            uniforms, gammas)
        else:
            grad = objective.grad if hasattr(objective, "grad") else objective
            for g in gammas:
                y = sample_next(P, x, rng)
                theta = sg_step(theta, grad, (x, y), g)
                x = y
        done += m
        ks.append(done)
        thetas.append(theta.copy())
    return SGTrajectory(np.array(ks), np.array(thetas), seed)


class RCheck(NamedTuple):
    detailed_balance: bool
    strictly_lazy: bool
    r_posdef: bool


def pair_matrix(P) -> np.ndarray:
    """``R = diag(q) P``, the stationary law of consecutive state pairs."""
    p = P.p if isinstance(P, StochasticMatrix) else np.asarray(P, dtype=float)
    return stationary_distribution(p)[:, None] * p


def check_r_posdef(P) -> RCheck:
    """Symmetry, strict laziness and positive definiteness of ``R``."""
    p = P.p if isinstance(P, StochasticMatrix) else np.asarray(P, dtype=float)
    R = pair_matrix(p)
    sym = bool(np.abs(R - R.T).max() <= 1e-12)
    lazy = bool(np.all(np.diag(p) > 0.5))
    posdef = bool(np.linalg.eigvalsh(0.5 * (R + R.T)).min() > 0)
    return RCheck(sym, lazy, posdef)


# -- per-pair updates, for mean-field evaluation --------------------------------

def kl_pair_update(problem: KLProblem):
    """Update ``f((z, lam), i, j)`` of KL-learning, as a vector of length ``n + 1``."""
    w = np.exp(-problem.beta * problem.c)
    n = problem.n

    def f(theta, i, j):
        z, lam = theta[:n], theta[n]
        delta = w[i, j] * z[j] / lam - z[i]
        out = np.zeros(n + 1)
        out[i] = delta
        out[n] = delta
        return out

    return f


def z_pair_update(problem: KLProblem):
    """Update ``f(z, i, j)`` of Z-learning."""
    w = np.exp(-problem.beta * problem.c)

    def f(z, i, j):
        out = np.zeros(len(z))
        out[i] = w[i, j] * z[j] - z[i]
        return out

    return f


def sg_pair_update(h_grad: Callable):
    """Update ``f(theta, i, j) = -dh/dtheta^j e_i`` of the stochastic gradient method."""

    def f(theta, i, j):
        out = np.zeros(len(theta))
        out[i] = -h_grad(theta)[j]
        return out

    return f

"""Mean-field ODEs of the learners and the stability of their equilibria.

The KL-learning ODE is ``zdot = D(H/lam - I) z``, ``lamdot = 1^T zdot``
with ``D`` the diagonal of stationary probabilities. Its equilibrium is the
Perron pair with ``||z*||_1 = lam*``, and its local stability is decided by
the spectrum of ``D(H - lam* I - z* 1^T)``.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np

from . import eigen, instances
from .errors import (
    Blowup,
    EigenNoConvergence,
    EmptyOverlap,
    LambdaNonPositive,
    StabilityViolation,
    WrongNormalization,
)
from .klproblem import LAMBDA_SUM, Eigenpair, KLProblem, build_h, renormalize, solve_perron_direct
from .learners import Trajectory
from .markov import StochasticMatrix, format_matrix, stationary_distribution

log = logging.getLogger(__name__)

EPS_STAB = 1e-9
NONSINGULAR_RTOL = 1e-10
BLOWUP_LIMIT = 1e12


# -- right-hand sides -----------------------------------------------------------

def rhs_kl(z, lam, D, H):
    """``(D(H/lam - I) z, 1^T D(H/lam - I) z)``."""
    if lam <= 0:
        raise LambdaNonPositive(f"lambda must be positive, got {lam}")
    zdot = np.asarray(D) * (H @ z / lam - z)
    return zdot, float(zdot.sum())


def rhs_reduced(z, D, H):
    """KL ODE with ``lam`` replaced by ``||z||_1``."""
    return rhs_kl(z, float(np.sum(z)), D, H)[0]


def rhs_zlearning(z, D, H):
    """``-D(I - H) z``."""
    return np.asarray(D) * (H @ z - z)


def rhs_sg(theta, R, grad: Callable):
    """Stochastic gradient mean field ``-R grad h(theta)``."""
    return -R @ grad(theta)


def lyapunov_sg(theta, R, grad: Callable) -> float:
    """``V = 0.5 <grad h, R grad h>``."""
    g = grad(theta)
    return 0.5 * float(g @ R @ g)


def mean_field_eval(update_fn: Callable, P, theta) -> np.ndarray:
    """Exact average ``sum_ij q_i p_ij f(theta, i, j)`` under the stationary pair law."""
    p = P.p if isinstance(P, StochasticMatrix) else np.asarray(P, dtype=float)
    qstat = stationary_distribution(p)
    total = None
    for i in range(p.shape[0]):
        for j in np.flatnonzero(p[i] > 0):
            term = qstat[i] * p[i, j] * np.asarray(update_fn(theta, i, j), dtype=float)
            total = term if total is None else total + term
    return total


# -- paths --------------------------------------------------------------------

@dataclass(eq=False)
class OdePath:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def at(self, t) -> np.ndarray:
        """Linear interpolation of every component at times ``t``."""
        t = np.atleast_1d(t)
        return np.column_stack([np.interp(t, self.times, self.states[:, i])
                                for i in range(self.states.shape[1])])


def integrate_euler(rhs: Callable, x0, dt, T, invariant: Callable | None = None) -> OdePath:
    """Explicit Euler path of ``xdot = rhs(x)`` on ``[0, T]``.

    ``invariant(x, t)`` is called at every node and may raise.

    Raises
    ------
    Blowup
        If a component becomes non-finite or exceeds ``1e12`` in magnitude.
    """
    if dt <= 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    steps = int(round(T / dt))
    x = np.array(x0, dtype=float)
    out = np.empty((steps + 1, x.size))
    out[0] = x
    for m in range(steps):
        x = x + dt * np.asarray(rhs(x), dtype=float)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > BLOWUP_LIMIT:
            raise Blowup(f"Euler path left the bounded region at t = {(m + 1) * dt:.6g}")
        if invariant is not None:
            invariant(x, (m + 1) * dt)
        out[m + 1] = x
    return OdePath(np.arange(steps + 1) * dt, out)


def kl_ode_path(H, D, z0, lam0, dt, T, drift_const=1.0) -> OdePath:
    """Euler path of the ``(z, lam)`` KL ODE; columns ``z_0..z_{n-1}, lam``.

    Asserts ``| ||z(t)||_1 - lam(t) | <= drift_const * dt`` at every node.
    """
    n = len(z0)

    def rhs(v):
        zdot, lamdot = rhs_kl(v[:n], v[n], D, H)
        return np.append(zdot, lamdot)

    def invariant(v, t):
        gap = abs(v[:n].sum() - v[n])
        if gap > drift_const * dt * max(1.0, v[n]):
            raise AssertionError(f"||z||_1 drifted from lambda by {gap:.3e} at t = {t:.6g}")

    return integrate_euler(rhs, np.append(np.asarray(z0, float), lam0), dt, T, invariant)


def euler_halving_gap(rhs: Callable, x0, dt, T) -> float:
    """l1 change of the Euler endpoint when ``dt`` is halved (its error estimate)."""
    a = integrate_euler(rhs, x0, dt, T).states[-1]
    b = integrate_euler(rhs, x0, dt / 2, T).states[-1]
    return float(np.abs(a - b).sum())


def interpolate_trajectory(traj: Trajectory, dt, shift=0, horizon=None, components=None) -> OdePath:
    """Piecewise-constant path ``theta^shift(t) = theta_p`` for ``t_p <= t + t_shift < t_{p+1}``.

    Evaluated on a uniform grid of spacing ``dt`` from 0 to ``horizon``
    (default: the end of the trajectory). ``components`` selects columns of
    ``z`` (default all).
    """
    t = np.asarray(traj.t)
    z = traj.z if components is None else traj.z[:, components]
    t0 = t[shift]
    end = t[-1] - t0 if horizon is None else horizon
    if len(t) == 1 or end <= 0:
        grid = np.array([0.0]) if end <= 0 else np.arange(0.0, end + 0.5 * dt, dt)
        return OdePath(grid, np.repeat(z[shift:shift + 1], len(grid), axis=0))
    grid = np.arange(0.0, end + 0.5 * dt, dt)
    # accumulated gains and grid nodes that agree up to rounding count as equal
    idx = np.searchsorted(t, grid + t0 + 1e-9 * dt, side="right") - 1
    return OdePath(grid, z[np.clip(idx, 0, len(t) - 1)])


def compare_paths(a: OdePath, b: OdePath, window) -> float:
    """Sup over ``window`` of the l1 distance between linearly resampled paths."""
    lo = max(window[0], a.times[0], b.times[0])
    hi = min(window[1], a.times[-1], b.times[-1])
    if hi < lo:
        raise EmptyOverlap(f"paths do not overlap on {window}")
    grid = np.union1d(a.times, b.times)
    grid = np.union1d(grid[(grid >= lo) & (grid <= hi)], [lo, hi])
    return float(np.abs(a.at(grid) - b.at(grid)).sum(axis=1).max())


def tracking_distances(problem: KLProblem, schedule, seeds, windows, window_length=5.0,
                       dt=1e-3, algo="kl"):
    """Sup-distance between learner and ODE over windows of algorithmic time.

    For every seed the learner runs until ``t = max(windows) + window_length``
    recording every step. For each window start ``s`` the ODE is started from
    the learner's state at ``s`` and integrated for ``window_length``;
    the returned array ``d[seed, window]`` holds the sup l1 distance of the
    ``z`` components over the window.
    """
    from .learners import run_learner

    H = build_h(problem)
    D = stationary_distribution(problem.q)
    t_end = max(windows) + window_length
    k = np.arange(1, 1 << 22)
    steps = int(np.searchsorted(np.cumsum(schedule.gains(k)), t_end) + 2)
    n = problem.n
    d = np.empty((len(seeds), len(windows)))
    for si, seed in enumerate(seeds):
        traj = run_learner(algo, problem, schedule, steps, stride=1, seed=seed)
        for wi, start in enumerate(windows):
            p = int(np.searchsorted(traj.t, start, side="right") - 1)
            learner = interpolate_trajectory(traj, dt, shift=p, horizon=window_length)
            z0 = traj.z[p]
            if algo == "z":
                ode = integrate_euler(lambda v: rhs_zlearning(v, D, H), z0, dt, window_length)
            else:
                ode = kl_ode_path(H, D, z0, traj.lam[p], dt, window_length)
                ode = OdePath(ode.times, ode.states[:, :n])
            d[si, wi] = compare_paths(learner, ode, (0.0, window_length))
    return d


# -- linearisation and stability ----------------------------------------------

def linearization(H, D, e: Eigenpair) -> np.ndarray:
    """``D(H - lam* I - z* 1^T)``; requires ``||z*||_1 = lam*``."""
    if e.normalization != LAMBDA_SUM or abs(e.z.sum() - e.lam) > 1e-12 * max(1.0, e.lam):
        raise WrongNormalization("linearisation needs the eigenpair scaled to ||z||_1 = lambda")
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    return np.asarray(D)[:, None] * (H - e.lam * np.eye(n) - np.outer(e.z, np.ones(n)))


spectral_abscissa = eigen.spectral_abscissa

D_SCALAR = "DScalar"
LEFT_ONES_PERRON = "LeftOnesPerron"
TWO_BY_TWO = "TwoByTwo"


@dataclass
class StabilityReport:
    """Spectral data of the linearisation ``A`` at the KL-learning equilibrium.

    All margins are relative to ``||B||_2`` for the balanced ``B ~ A``:
    ``strictly_stable`` means abscissa below ``-1e-9 ||B||``, ``nonsingular``
    means smallest singular value of ``B`` above ``1e-10 ||B||``.
    """

    matrix_dim: int
    nonsingular: bool
    spectral_abscissa: float
    strictly_stable: bool
    sufficient_condition: str | None
    det: float = 0.0
    lam: float = 0.0
    extra: dict = field(default_factory=dict)


def _sufficient_condition(H, D, lam) -> str | None:
    n = H.shape[0]
    if n == 2:
        return TWO_BY_TWO
    if np.ptp(D) <= 1e-12 * np.max(D):
        return D_SCALAR
    if np.abs(H.sum(axis=0) - lam).max() <= 1e-10 * max(lam, np.abs(H).max()):
        return LEFT_ONES_PERRON
    return None


def stability_report_matrix(H, D, e: Eigenpair | None = None, strict=True) -> StabilityReport:
    """Stability data of ``D(H - lam* I - z* 1^T)`` for an irreducible nonnegative ``H``.

    With ``strict`` set, a singular matrix, or a non-stable one when a
    proven sufficient condition applies, raises :class:`StabilityViolation`.
    """
    H = np.asarray(H, dtype=float)
    D = np.asarray(D, dtype=float)
    if e is None:
        e = solve_perron_direct(H)
    e = renormalize(e, LAMBDA_SUM)
    A = linearization(H, D, e)
    n = H.shape[0]
    abscissa = spectral_abscissa(A)
    sign, logdet = np.linalg.slogdet(A)
    # spectrum and singularity are invariant under diagonal similarity, so
    # margins are measured on the balanced matrix
    B = eigen.balanced(A)
    sv = np.linalg.svd(B, compute_uv=False)
    scale = float(sv[0])
    nonsingular = bool(sv[-1] > NONSINGULAR_RTOL * scale)
    cond = _sufficient_condition(H, D, e.lam)
    report = StabilityReport(n, nonsingular, abscissa, abscissa < -EPS_STAB * scale, cond,
                             det=float(sign * np.exp(logdet)), lam=e.lam,
                             extra={"scale": scale, "sigma_min": float(sv[-1])})
    if strict:
        if not report.nonsingular:
            raise StabilityViolation(f"linearisation is singular (det = {report.det:.3e})")
        if cond is not None and not report.strictly_stable:
            raise StabilityViolation(f"{cond} applies but spectral abscissa is {abscissa:.3e}")
    return report


def stability_report(problem: KLProblem, D_override=None, strict=True) -> StabilityReport:
    """Stability of the KL-learning equilibrium; ``D`` defaults to the stationary law."""
    H = build_h(problem)
    D = stationary_distribution(problem.q) if D_override is None else np.asarray(D_override, float)
    return stability_report_matrix(H, D, strict=strict)


# -- conjecture fuzzing ---------------------------------------------------------

D_MODES = ("uniform", "stationary", "scalar")


def fuzz_instance(root_seed, index, n_range, d_mode):
    """Instance ``index`` of a fuzz run: ``(n, H, D)`` from ``default_rng([root_seed, index])``."""
    rng = np.random.default_rng([root_seed, index])
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    problem = instances.random_problem(rng, n)
    H = build_h(problem)
    if d_mode == "stationary":
        D = stationary_distribution(problem.q)
    elif d_mode == "scalar":
        D = np.full(n, float(instances.log_uniform(rng, 0.01, 1.0)))
    else:
        D = instances.random_diagonal(rng, n)
    return n, H, D


def reverify_extended(H, D, dps=50) -> float:
    """Spectral abscissa of ``D(H - lam* I - z* 1^T)`` recomputed at ``dps`` digits."""
    with mpmath.workdps(dps):
        Hm = mpmath.matrix(np.asarray(H).tolist())
        vals, vecs = mpmath.eig(Hm)
        idx = max(range(len(vals)), key=lambda i: mpmath.re(vals[i]))
        lam = mpmath.re(vals[idx])
        z = [mpmath.re(vecs[i, idx]) for i in range(Hm.rows)]
        s = mpmath.fsum(z)
        z = [zi * lam / s for zi in z]
        n = Hm.rows
        A = mpmath.matrix(n, n)
        for i in range(n):
            for j in range(n):
                A[i, j] = mpmath.mpf(float(D[i])) * (Hm[i, j] - (lam if i == j else 0) - z[i])
        return float(max(mpmath.re(v) for v in mpmath.eig(A, left=False, right=False)))


def _fuzz_one(args):
    root_seed, index, n_range, d_mode = args
    n, H, D = fuzz_instance(root_seed, index, n_range, d_mode)
    rec = {"seed": [int(root_seed), int(index)], "n": n}
    try:
        rep = stability_report_matrix(H, D, strict=False)
    except (EigenNoConvergence, np.linalg.LinAlgError) as exc:
        rec.update(error=str(exc))
        return rec
    rec.update(spectral_abscissa=rep.spectral_abscissa, det=rep.det,
               sufficient_condition=rep.sufficient_condition, stable=rep.strictly_stable,
               nonsingular=rep.nonsingular)
    if not rep.strictly_stable:
        e = renormalize(solve_perron_direct(H), LAMBDA_SUM)
        ext = reverify_extended(H, D)
        rec.update(candidate=True, extended_abscissa=ext, verified=bool(ext >= 0),
                   H=format_matrix(H), D=format_matrix(np.diag(D)),
                   z=e.z.tolist(), lam=e.lam)
    return rec


def conjecture_fuzz(n_range, count, seed=0, report_sink=None, d_mode="uniform", workers=1):
    """Search for unstable ``D(H - lam* I - z* 1^T)`` over random instances.

    Instance ``i`` is generated from ``default_rng([seed, i])``. Every
    instance whose spectral abscissa is not below ``-1e-9`` is a candidate:
    it is recomputed at 50 digits and serialized in full. ``report_sink``
    receives one JSON line per instance, in index order.

    Returns ``{count, stable_count, candidates, verified_counterexamples, failures}``.
    """
    if d_mode not in D_MODES:
        raise ValueError(f"d_mode must be one of {D_MODES}")
    jobs = [(seed, i, tuple(n_range), d_mode) for i in range(count)]
    if workers > 1 and count > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_fuzz_one, jobs, chunksize=64))
    else:
        records = [_fuzz_one(j) for j in jobs]
    summary = {"count": count, "stable_count": 0, "candidates": [], "verified_counterexamples": 0,
               "failures": 0}
    for rec in records:
        if "error" in rec:
            summary["failures"] += 1
            log.warning("instance %s skipped: %s", rec["seed"], rec["error"])
        elif rec["stable"]:
            summary["stable_count"] += 1
        if rec.get("candidate"):
            summary["candidates"].append(rec)
            summary["verified_counterexamples"] += int(rec["verified"])
        if report_sink is not None:
            report_sink.write(json.dumps(rec, sort_keys=True) + "\n")
    return summary

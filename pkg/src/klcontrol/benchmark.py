"""Learners versus the relaxed power method on a cost-normalized problem.

Errors are compared on two axes: iteration count, and elementary
operations, where one stochastic step costs 1 and one power iteration
costs ``nnz(H)``.
"""

from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .klproblem import KLProblem, build_h, normalize_costs, relaxed_power_errors, solve_power
from .learners import KL, Z, run_learner
from .schedules import Constant

BENCH_HEADER = ("iteration", "kl_err", "z_err", "power_err", "kl_ops", "z_ops", "power_ops")


def derive_seeds(root, count) -> list[int]:
    """``count`` independent 64-bit seeds split off one root seed."""
    return [int(s.generate_state(1, np.uint64)[0])
            for s in np.random.SeedSequence(root).spawn(count)]


@dataclass(eq=False)
class BenchmarkResult:
    """Per-seed learner error curves and the deterministic power-method curve."""

    k: np.ndarray
    kl_err: np.ndarray
    z_err: np.ndarray
    power_err: np.ndarray
    nnz: int
    lam: float
    seeds: list
    gamma: float
    meta: dict = field(default_factory=dict)

    @property
    def power_ops(self) -> np.ndarray:
        return np.arange(len(self.power_err)) * self.nnz

    def median_curves(self):
        return np.median(self.kl_err, axis=0), np.median(self.z_err, axis=0)

    def power_ops_to(self, target) -> int | None:
        """Operations the power method needs to first reach ``target`` error."""
        hit = np.flatnonzero(self.power_err <= target)
        return int(hit[0] * self.nnz) if hit.size else None

    def to_csv(self) -> str:
        """Wide table on the union of learner and power iteration indices.

        Learner columns hold the median over seeds; a cell is empty where
        a method has no sample at that iteration.
        """
        kl, z = self.median_curves()
        learner = {int(k): i for i, k in enumerate(self.k)}
        rows = sorted(set(learner) | set(range(len(self.power_err))))
        buf = io.StringIO()
        buf.write(",".join(BENCH_HEADER) + "\n")
        for it in rows:
            li = learner.get(it)
            cells = [str(it)]
            cells += ["" if li is None else f"{kl[li]:.17g}", "" if li is None else f"{z[li]:.17g}"]
            cells.append(f"{self.power_err[it]:.17g}" if it < len(self.power_err) else "")
            cells += ["" if li is None else str(it)] * 2
            cells.append(str(it * self.nnz) if it < len(self.power_err) else "")
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def _learner_errors(args):
    algo, problem, gamma, steps, stride, seed, reference = args
    traj = run_learner(algo, problem, Constant(gamma), steps, stride=stride, seed=seed,
                       reference=reference)
    return traj.k, traj.err


def run_benchmark(problem: KLProblem, gamma=0.05, steps=100_000, seed=1, n_seeds=1, stride=100,
                  power_iterations=None, workers=1) -> BenchmarkResult:
    """KL-learning, Z-learning and relaxed power iteration with the same gain.

    Costs are first shifted so that ``lam* = 1``. The power method runs for
    ``power_iterations`` iterations (default: enough to spend ten times the
    learners' operation budget).
    """
    problem = normalize_costs(problem)
    H = build_h(problem)
    reference = solve_power(H)
    nnz = int(np.count_nonzero(H))
    if power_iterations is None:
        power_iterations = max(1, int(np.ceil(10 * steps / nnz)))
    seeds = derive_seeds(seed, n_seeds)
    jobs = [(algo, problem, gamma, steps, stride, s, reference) for s in seeds for algo in (KL, Z)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_learner_errors, jobs))
    else:
        results = [_learner_errors(j) for j in jobs]
    k = results[0][0]
    kl_err = np.array([r[1] for r in results[0::2]])
    z_err = np.array([r[1] for r in results[1::2]])
    power = relaxed_power_errors(H, Constant(gamma), power_iterations, reference)
    meta = {"root_seed": seed, "seeds": seeds, "gamma": gamma, "steps": steps, "stride": stride,
            "nnz_h": nnz, "lambda_after_normalization": reference.lam,
            "power_iterations": power_iterations}
    return BenchmarkResult(k, kl_err, z_err, power, nnz, reference.lam, seeds, gamma, meta)


def window_means(values, window):
    """Means over consecutive non-overlapping blocks of ``window`` samples (ragged tail dropped)."""
    values = np.asarray(values)
    m = values.shape[-1] // window
    return values[..., : m * window].reshape(*values.shape[:-1], m, window).mean(axis=-1)


def smoothed_decrease(curves, window, sigmas=3.0):
    """Check that seed-median block means trend downward beyond noise.

    ``curves`` is ``(seeds, samples)``. Block means are formed per seed and
    the median taken across seeds; its standard error is the across-seed
    standard deviation times ``1.2533 / sqrt(seeds)``. The curve passes
    when no block rises above an earlier one by more than ``sigmas``
    combined standard errors and the last block is at most half the first.

    Returns ``(passed, medians, standard_errors)``.
    """
    blocks = window_means(np.atleast_2d(curves), window)
    med = np.median(blocks, axis=0)
    se = 1.2533 * blocks.std(axis=0, ddof=1) / np.sqrt(blocks.shape[0]) if blocks.shape[0] > 1 \
        else np.zeros(blocks.shape[1])
    ok = med[-1] <= 0.5 * med[0]
    for j in range(1, len(med)):
        prior = np.arange(j)
        rise = med[j] - med[prior]
        ok &= bool(np.all(rise <= sigmas * np.hypot(se[j], se[prior])))
    return bool(ok), med, se

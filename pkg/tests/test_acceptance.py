"""End-to-end acceptance checks.

Each test prints one ``criterion N: PASS|FAIL ...`` line (visible even
without ``-s``) and asserts the same condition. Every random draw comes
from ``ROOT_SEED``.
"""

import time

import numpy as np
import pytest

from klcontrol import instances, markov
from klcontrol.benchmark import derive_seeds, run_benchmark, smoothed_decrease
from klcontrol.cli import two_state_example
from klcontrol.gridworld import build_gridworld, default_layout
from klcontrol.klproblem import (
    LAMBDA_SUM, UNIT_SUM, KLProblem, average_cost, build_h, controlled_stationary, kl_bounds,
    optimal_policy, perron_residual, policy_average_cost, rank_one_solution, renormalize,
    solve_perron_direct, solve_power, solve_relaxed,
)
from klcontrol.learners import (
    KL_PROJECTED, QuadraticObjective, check_r_posdef, kl_pair_update, pair_matrix, run_learner,
    run_sg, z_pair_update,
)
from klcontrol.odeanalysis import (
    conjecture_fuzz, fuzz_instance, integrate_euler, kl_ode_path, linearization,
    lyapunov_sg, mean_field_eval, rhs_kl, rhs_sg, rhs_zlearning, stability_report,
    stability_report_matrix, tracking_distances,
)
from klcontrol.schedules import RobbinsMonro

pytestmark = pytest.mark.acceptance

ROOT_SEED = 0

# moderate costs keep the spectral gap of H away from zero so that plain
# power iteration converges in a bounded number of steps
MODERATE = dict(cost_max=2.0, beta_range=(0.2, 3.0))


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return emit


def test_rank_one_closed_form(verdict):
    rng = np.random.default_rng(ROOT_SEED)
    start = time.perf_counter()
    worst_lam = worst_z = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 11))
        problem, qvec, cstate = instances.random_rank_one_problem(rng, n)
        got = renormalize(solve_power(build_h(problem)), UNIT_SUM)
        want = rank_one_solution(qvec, cstate, problem.beta)
        worst_lam = max(worst_lam, abs(got.lam - want.lam))
        worst_z = max(worst_z, np.abs(got.z - want.z).sum())
    elapsed = time.perf_counter() - start
    ok = worst_lam <= 1e-9 and worst_z <= 1e-8 and elapsed < 5
    verdict(1, ok, f"max|dlam|={worst_lam:.2e} max l1(dz)={worst_z:.2e} time={elapsed:.2f}s")
    assert ok


def test_eigen_residual_and_solver_agreement(verdict):
    rng = np.random.default_rng(ROOT_SEED)
    start = time.perf_counter()
    worst_res = worst_gap = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 21))
        H = build_h(instances.random_problem(rng, n, **MODERATE))
        a = solve_power(H, tol=1e-12)
        b = solve_relaxed(H, tol=1e-12)
        for e in (a, b):
            worst_res = max(worst_res, perron_residual(H, e.z, e.lam))
        worst_gap = max(worst_gap, np.abs(a.z - b.z).sum())
    elapsed = time.perf_counter() - start
    ok = worst_res <= 1e-10 and worst_gap <= 1e-8 and elapsed < 30
    verdict(2, ok, f"max residual={worst_res:.2e} max l1 gap={worst_gap:.2e} time={elapsed:.1f}s")
    assert ok


def _perturbed_policy(rng, p, support):
    """Random feasible policy near ``p``: a mixture with a random law on the support of ``q``."""
    noise = np.where(support, rng.gamma(1.0, size=p.shape), 0.0)
    noise /= noise.sum(axis=1, keepdims=True)
    eps = float(instances.log_uniform(rng, 1e-4, 1.0))
    return (1 - eps) * p + eps * noise


def test_bellman_optimality(verdict):
    rng = np.random.default_rng(ROOT_SEED)
    start = time.perf_counter()
    worst_gap, beaten = 0.0, 0
    for _ in range(50):
        problem = instances.random_problem(rng, int(rng.integers(2, 6)))
        e = solve_perron_direct(build_h(problem))
        rho = average_cost(e.lam, problem.beta)
        p = optimal_policy(problem, e).p
        worst_gap = max(worst_gap, abs(policy_average_cost(problem, p) - rho))
        support = problem.q.p > 0
        for _ in range(200):
            other = policy_average_cost(problem, _perturbed_policy(rng, p, support))
            beaten += other < rho - 1e-10
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 1e-6 and beaten == 0 and elapsed < 60
    verdict(3, ok, f"max|J(p*)-rho*|={worst_gap:.2e} perturbations below rho*={beaten}/10000 "
                   f"time={elapsed:.1f}s")
    assert ok


# -- learner convergence ----------------------------------------------------------

C4_SCHEDULE = RobbinsMonro(1, 50, 1)
C4_STEPS = 2_000_000


@pytest.fixture(scope="module")
def kl_runs():
    rng = np.random.default_rng(ROOT_SEED)
    start = time.perf_counter()
    runs = []
    for i in range(30):
        problem = instances.random_problem(rng, int(rng.integers(2, 21)), **MODERATE)
        ref = solve_power(build_h(problem), tol=1e-12)
        traj = run_learner(KL_PROJECTED, problem, C4_SCHEDULE, C4_STEPS, stride=1000, seed=i,
                           reference=ref)
        runs.append((problem, ref, traj))
    return runs, time.perf_counter() - start


def _ode_error_at_horizon(problem, ref, traj):
    """Normalised error of the noise-free mean-field path at the learner's final time."""
    H = build_h(problem)
    D = markov.stationary_distribution(problem.q)
    path = kl_ode_path(H, D, traj.z[0], traj.lam[0], 1e-2, float(traj.t[-1]))
    z = path.states[-1, :problem.n]
    return float(np.abs(z / z.sum() - ref.z).sum())


def test_kl_learning_convergence(verdict, kl_runs):
    runs, elapsed = kl_runs
    errs = np.array([traj.final_error for _, _, traj in runs])
    good = int((errs <= 0.02).sum())
    ok = good >= 28 and elapsed < 180
    ode = np.array([_ode_error_at_horizon(*run) for run in runs])
    verdict(4, ok, f"{good}/30 runs within 0.02 (median err {np.median(errs):.3f}) "
                   f"time={elapsed:.1f}s; noise-free ODE at t={runs[0][2].t[-1]:.2f} "
                   f"within 0.02 in only {int((ode <= 0.02).sum())}/30")
    assert ok


def test_invariant_set_containment(verdict, kl_runs):
    runs, _ = kl_runs
    violations, worst_drift, projections = 0, 0.0, 0
    for problem, _, traj in runs:
        lam_min, m_bound = kl_bounds(problem)
        n = problem.n
        violations += int(np.sum((traj.z <= 0) | (traj.z > m_bound)))
        violations += int(np.sum((traj.lam < lam_min) | (traj.lam > n * m_bound)))
        worst_drift = max(worst_drift, traj.meta["max_resync_drift"])
        projections += traj.meta["projection_count"]
    # run_learner would have raised StateCorrupt on any per-step breach
    ok = violations == 0 and worst_drift <= 1e-9
    verdict(5, ok, f"violations={violations} max resync drift={worst_drift:.2e} "
                   f"projections={projections}")
    assert ok


def test_mean_field_identity(verdict):
    rng = np.random.default_rng(ROOT_SEED)
    worst = 0.0
    for _ in range(100):
        problem = instances.random_problem(rng, int(rng.integers(2, 9)))
        H = build_h(problem)
        D = markov.stationary_distribution(problem.q)
        z = rng.uniform(0.01, 2.0, problem.n)
        lam = float(rng.uniform(0.1, 3.0))
        zdot, lamdot = rhs_kl(z, lam, D, H)
        kl = mean_field_eval(kl_pair_update(problem), problem.q, np.append(z, lam))
        zl = mean_field_eval(z_pair_update(problem), problem.q, z)
        worst = max(worst, np.abs(kl - np.append(zdot, lamdot)).max(),
                    np.abs(zl - rhs_zlearning(z, D, H)).max())
    ok = worst <= 1e-12
    verdict(6, ok, f"max abs deviation={worst:.2e}")
    assert ok


def test_gridworld_benchmark(verdict):
    start = time.perf_counter()
    problem = build_gridworld(default_layout(), beta=1.0)
    res = run_benchmark(problem, gamma=0.05, steps=100_000, seed=ROOT_SEED, n_seeds=10)
    elapsed = time.perf_counter() - start
    window = 5_000 // 100
    kl_ok = smoothed_decrease(res.kl_err, window)[0]
    z_ok = smoothed_decrease(res.z_err, window)[0]
    kl, z = res.median_curves()
    ratio = kl[-1] / z[-1]
    kl_ops = int(res.k[-1])
    power_ops = res.power_ops_to(0.01)
    ops_ratio = np.inf if power_ops is None else power_ops / kl_ops
    ok = (kl_ok and z_ok and 0.5 <= ratio <= 2 and 0.1 <= ops_ratio <= 10 and elapsed < 120)
    verdict(7, ok, f"(a) kl decreasing={kl_ok} z decreasing={z_ok} (b) kl/z final={ratio:.2f} "
                   f"(c) power ops to 0.01={power_ops} vs kl ops={kl_ops} "
                   f"time={elapsed:.1f}s")
    assert ok


# -- stability --------------------------------------------------------------------

def _column_rescaled(rng, n):
    """Irreducible ``H`` with all column sums equal to 1, hence ``1^T H = lam* 1^T``.

    Costs are moderate: dividing by column sums near ``exp(-50)`` would push
    entries of ``z*`` below machine precision.
    """
    H = build_h(instances.random_problem(rng, n, **MODERATE))
    return H / H.sum(axis=0, keepdims=True)


def test_stability_suite(verdict):
    rng = np.random.default_rng(ROOT_SEED)
    start = time.perf_counter()
    bad = {"n=2": 0, "scalar D": 0, "column-rescaled": 0}
    for _ in range(1000):
        problem = instances.random_problem(rng, 2)
        rep = stability_report(problem, D_override=instances.random_diagonal(rng, 2))
        bad["n=2"] += not (rep.strictly_stable and rep.nonsingular)
    for _ in range(1000):
        n = int(rng.integers(3, 13))
        D = np.full(n, float(instances.log_uniform(rng, 0.01, 1.0)))
        rep = stability_report(instances.random_problem(rng, n), D_override=D)
        bad["scalar D"] += not (rep.strictly_stable and rep.nonsingular)
    for _ in range(1000):
        n = int(rng.integers(3, 13))
        rep = stability_report_matrix(_column_rescaled(rng, n), instances.random_diagonal(rng, n))
        bad["column-rescaled"] += not (rep.strictly_stable and rep.nonsingular)

    count = 10_000
    summary = conjecture_fuzz((3, 12), count, seed=ROOT_SEED)
    flagged = {tuple(c["seed"]) for c in summary["candidates"]}
    serialized = all({"H", "D", "z", "lam", "extended_abscissa"} <= set(c)
                     for c in summary["candidates"])
    # independent recheck with LAPACK eigenvalues: anything not clearly
    # stable must have been reported
    missed = 0
    for i in range(count):
        _, H, D = fuzz_instance(ROOT_SEED, i, (3, 12), "uniform")
        e = renormalize(solve_perron_direct(H), LAMBDA_SUM)
        abscissa = np.linalg.eigvals(linearization(H, D, e)).real.max()
        if abscissa >= 0 and (ROOT_SEED, i) not in flagged:
            missed += 1
    elapsed = time.perf_counter() - start
    frac = summary["stable_count"] / count
    ok = (not any(bad.values()) and serialized and missed == 0 and summary["failures"] == 0
          and elapsed < 300)
    verdict(8, ok, f"proven-case failures={bad} fuzz stable fraction={frac:.4f} "
                   f"candidates={len(flagged)} verified counterexamples="
                   f"{summary['verified_counterexamples']} unflagged={missed} time={elapsed:.0f}s")
    assert ok


def test_ode_tracking(verdict):
    start = time.perf_counter()
    d = tracking_distances(two_state_example(), RobbinsMonro(1, 1, 0.7),
                           derive_seeds(ROOT_SEED, 20), [1.0, 5.0, 25.0])
    med = np.median(d, axis=0)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(np.diff(med) < 0)) and elapsed < 60
    verdict(9, ok, f"median sup-distance at t=1,5,25: {np.array2string(med, precision=4)} "
                   f"time={elapsed:.1f}s")
    assert ok


def test_pair_distribution_mixing(verdict):
    rng = np.random.default_rng(ROOT_SEED)
    fits = []
    for _ in range(10):
        P = instances.random_chain(rng, int(rng.integers(2, 9)))
        mix = markov.mixing_time(P)
        target = markov.stationary_pair_distribution(P)
        ks = np.arange(mix, 4 * mix + 1)
        dist = np.array([max(markov.tv_distance(markov.exact_pair_distribution(P, x, k), target)
                             for x in range(P.n)) for k in ks])
        _, alpha, r2 = markov.fit_geometric_decay(ks, dist)
        # smallest constant making the fitted rate a true bound over the window
        C = float(np.max(dist / alpha ** ks))
        fits.append((alpha, r2, bool(np.all(dist <= C * alpha ** ks * (1 + 1e-12)))))
    alphas, r2s, bounded = map(np.array, zip(*fits))
    ok = bool(np.all(alphas < 1) and np.all(r2s >= 0.99) and bounded.all())
    verdict(10, ok, f"alpha max={alphas.max():.3f} R^2 min={r2s.min():.4f}")
    assert ok


def test_detailed_balance(verdict):
    rng = np.random.default_rng(ROOT_SEED)
    worst = {"state": 0.0, "symmetric": 0.0}
    for case in worst:
        for _ in range(20):
            n = int(rng.integers(2, 11))
            q = instances.random_reversible_chain(rng, n)
            beta = float(instances.log_uniform(rng, 0.1, 10.0))
            if case == "state":
                problem = KLProblem.from_state_costs(q, rng.uniform(0, 5, n), beta)
            else:
                c = rng.uniform(0, 5, (n, n))
                problem = KLProblem.from_symmetric_costs(q, np.triu(c) + np.triu(c, 1).T, beta)
            e = solve_perron_direct(build_h(problem))
            closed = controlled_stationary(problem, e, case)
            direct = markov.stationary_distribution(optimal_policy(problem, e))
            worst[case] = max(worst[case], np.abs(closed - direct).sum())
    ok = max(worst.values()) <= 1e-8
    verdict(11, ok, f"max l1 gap state={worst['state']:.2e} symmetric={worst['symmetric']:.2e}")
    assert ok


def test_stochastic_gradient(verdict):
    rng = np.random.default_rng(ROOT_SEED)
    n = 5
    P = instances.random_reversible_chain(rng, n, lazy=0.6)
    checks = check_r_posdef(P)
    G = rng.normal(size=(n, n))
    A = G @ G.T + n * np.eye(n)
    objective = QuadraticObjective(A, rng.normal(size=n))
    finals = [np.linalg.norm(run_sg(P, objective, np.zeros(n), RobbinsMonro(2, 10, 0.75),
                                    1_000_000, seed=s).theta[-1] - objective.theta_star)
              for s in derive_seeds(ROOT_SEED, 10)]
    hits = int(np.sum(np.array(finals) <= 0.05))

    # V is quadratic, so one Euler step changes it by dt * <grad V, f> (never
    # positive here) plus exactly dt^2 * f^T A R A f / 2
    R = pair_matrix(P)
    curvature = np.linalg.norm(A @ R @ A, 2)
    dt = 1e-3
    path = integrate_euler(lambda th: rhs_sg(th, R, objective.grad), np.zeros(n), dt, 20.0)
    V = np.array([lyapunov_sg(th, R, objective.grad) for th in path.states])
    step = np.linalg.norm(np.diff(path.states, axis=0), axis=1) / dt
    allowed = 0.5 * curvature * (step * dt) ** 2 + 1e-15 * V[:-1]
    monotone = bool(np.all(np.diff(V) <= allowed))
    ok = checks.strictly_lazy and checks.r_posdef and hits >= 9 and monotone
    verdict(12, ok, f"{hits}/10 seeds within 0.05 (max {max(finals):.2e}); V nonincreasing up to "
                    f"O(dt^2)={monotone}; V(0)={V[0]:.3g} V(20)={V[-1]:.3g}")
    assert ok

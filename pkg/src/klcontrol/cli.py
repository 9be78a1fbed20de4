"""``klcontrol`` command line: solve, learn, benchmark, stability, ode.

Every subcommand writes its outputs under ``--out`` together with a JSON
sidecar holding the full resolved configuration. Options may also come
from a ``--config`` JSON file; explicit flags take precedence.

Exit codes: 0 success, 2 bad input, 3 non-convergence, 4 corrupted learner
state, 10 stability candidates found.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import benchmark, gridworld, odeanalysis
from .errors import NoConvergence, StateCorrupt
from .klproblem import (
    LAMBDA_SUM,
    KLProblem,
    average_cost,
    build_h,
    optimal_policy,
    problem_from_dict,
    renormalize,
    solve_power,
    value_function,
)
from .learners import ALGORITHMS, KL, run_learner, write_trajectory
from .markov import format_matrix
from .schedules import Constant, RobbinsMonro

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3
EXIT_STATE_CORRUPT = 4
EXIT_CANDIDATES = 10

log = logging.getLogger("klcontrol")


class InputError(ValueError):
    pass


def two_state_example() -> KLProblem:
    """Uniform two-state chain with state costs ``(0, ln 2)`` and ``beta = 1``."""
    return KLProblem.from_state_costs(np.full((2, 2), 0.5), np.array([0.0, np.log(2.0)]), 1.0)


def zero_cost_example(n=3) -> KLProblem:
    """Uniform chain without costs: from ``z = 1/n`` nothing ever moves."""
    return KLProblem(np.full((n, n), 1.0 / n), np.zeros((n, n)), 1.0)


def load_problem(cfg, default=None) -> KLProblem:
    if cfg.get("problem"):
        path = Path(cfg["problem"])
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise InputError(f"problem file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"problem file is not valid JSON: {exc}") from None
        try:
            return problem_from_dict(data)
        except KeyError as exc:
            raise InputError(f"problem file lacks field {exc}") from None
    if cfg.get("grid"):
        path = Path(cfg["grid"])
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise InputError(f"grid file not found: {path}") from None
        costs = gridworld.GridCosts(*cfg.get("grid_costs", (1.0, 100.0, 0.0)))
        return gridworld.build_gridworld(gridworld.parse_grid(text), costs, cfg.get("beta", 1.0))
    if default is None:
        raise InputError("one of --problem or --grid is required")
    return default()


def make_schedule(cfg):
    if cfg.get("rm"):
        parts = [float(v) for v in str(cfg["rm"]).split(",")]
        return RobbinsMonro(*parts)
    return Constant(float(cfg.get("gamma", 0.05)))


def _out_dir(cfg) -> Path:
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- subcommands ----------------------------------------------------------------

def cmd_solve(cfg) -> int:
    problem = load_problem(cfg)
    e = solve_power(build_h(problem), tol=cfg.get("tol", 1e-10))
    out = _out_dir(cfg)
    policy = optimal_policy(problem, e)
    phi = value_function(e, problem.beta)
    rho = average_cost(e.lam, problem.beta)
    _write_json(out / "eigenpair.json", {
        "unit_sum": e.to_dict(),
        "lambda_sum": renormalize(e, LAMBDA_SUM).to_dict(),
        "value_function": phi.tolist(),
        "average_cost": rho,
        "config": cfg,
    })
    (out / "policy.txt").write_text(format_matrix(policy))
    (out / "value_function.csv").write_text("".join(f"{v!r}\n" for v in phi.tolist()))
    print(f"lambda* = {e.lam:.12g}")
    print(f"rho* = {rho:.12g}")
    print(f"residual = {e.residual:.3e}")
    print(f"iterations = {e.iterations}")
    return EXIT_OK


def cmd_learn(cfg) -> int:
    problem = load_problem(cfg)
    schedule = make_schedule(cfg)
    reference = solve_power(build_h(problem), tol=cfg.get("tol", 1e-10)) if cfg.get("reference") else None
    traj = run_learner(cfg.get("algo", KL), problem, schedule, int(cfg.get("steps", 100_000)),
                       stride=int(cfg.get("stride", 100)), seed=int(cfg.get("seed", 0)),
                       reference=reference, x0=int(cfg.get("x0", 0)))
    out = _out_dir(cfg)
    write_trajectory(traj, out / "trajectory.csv", extra_meta={"config": cfg})
    msg = f"{len(traj)} snapshots, final lambda = {traj.lam[-1]:.12g}"
    if traj.final_error is not None:
        msg += f", final error = {traj.final_error:.6g}"
    print(msg)
    return EXIT_OK


def cmd_benchmark(cfg) -> int:
    problem = load_problem(cfg, default=lambda: gridworld.build_gridworld(gridworld.default_layout()))
    res = benchmark.run_benchmark(problem, gamma=float(cfg.get("gamma", 0.05)),
                                  steps=int(cfg.get("steps", 100_000)), seed=int(cfg.get("seed", 1)),
                                  n_seeds=int(cfg.get("seeds", 1)), stride=int(cfg.get("stride", 100)),
                                  workers=int(cfg.get("workers", 1)))
    out = _out_dir(cfg)
    (out / "benchmark.csv").write_text(res.to_csv())
    kl, z = res.median_curves()
    summary = {**res.meta, "final_kl_err": float(kl[-1]), "final_z_err": float(z[-1]),
               "power_ops_to_0.01": res.power_ops_to(0.01), "config": cfg}
    _write_json(out / "benchmark.meta.json", summary)
    print(f"final error: kl {kl[-1]:.4g}, z {z[-1]:.4g}; power reaches 0.01 after "
          f"{summary['power_ops_to_0.01']} operations")
    return EXIT_OK


def cmd_stability(cfg) -> int:
    if cfg.get("n") is not None:
        n_range = (int(cfg["n"]), int(cfg["n"]))
    else:
        n_range = (int(cfg.get("n_min", 3)), int(cfg.get("n_max", 12)))
    if n_range[0] < 1 or n_range[1] < n_range[0]:
        raise InputError(f"invalid size range {n_range}")
    count = int(cfg.get("count", 1000))
    if count < 0:
        raise InputError("count must be nonnegative")
    out = _out_dir(cfg)
    with open(out / "fuzz.ndjson", "w") as sink:
        summary = odeanalysis.conjecture_fuzz(n_range, count, seed=int(cfg.get("seed", 0)),
                                              report_sink=sink, d_mode=cfg.get("d_mode", "uniform"),
                                              workers=int(cfg.get("workers", 1)))
    brief = {k: v for k, v in summary.items() if k != "candidates"}
    brief["candidate_seeds"] = [c["seed"] for c in summary["candidates"]]
    _write_json(out / "fuzz.summary.json", {**brief, "n_range": list(n_range), "config": cfg})
    print(f"{summary['stable_count']}/{count} strictly stable, {len(summary['candidates'])} candidates, "
          f"{summary['verified_counterexamples']} verified at extended precision")
    return EXIT_CANDIDATES if summary["candidates"] else EXIT_OK


def cmd_ode(cfg) -> int:
    if cfg.get("synthetic_zero"):
        problem = zero_cost_example()
    else:
        problem = load_problem(cfg, default=two_state_example)
    schedule = make_schedule(cfg) if (cfg.get("rm") or cfg.get("gamma")) else RobbinsMonro(1.0, 1.0, 0.7)
    windows = [float(w) for w in str(cfg.get("windows", "1,5,25")).split(",")]
    seeds = benchmark.derive_seeds(int(cfg.get("seed", 0)), int(cfg.get("seeds", 20)))
    d = odeanalysis.tracking_distances(problem, schedule, seeds, windows,
                                       window_length=float(cfg.get("window_length", 5.0)),
                                       dt=float(cfg.get("dt", 1e-3)), algo=cfg.get("algo", KL))
    out = _out_dir(cfg)
    lines = ["seed,window_start,sup_distance\n"]
    for si, s in enumerate(seeds):
        lines += [f"{s},{w!r},{d[si, wi]:.17g}\n" for wi, w in enumerate(windows)]
    (out / "ode.csv").write_text("".join(lines))
    med = np.median(d, axis=0)
    _write_json(out / "ode.meta.json", {"seeds": seeds, "windows": windows,
                                        "median_sup_distance": med.tolist(),
                                        "schedule": schedule.describe(), "config": cfg})
    print("median sup distance by window start: " +
          ", ".join(f"t={w:g}: {m:.4g}" for w, m in zip(windows, med)))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "learn": cmd_learn, "benchmark": cmd_benchmark,
            "stability": cmd_stability, "ode": cmd_ode}


# -- argument handling ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="klcontrol", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--out", help="output directory (default: current)")
        p.add_argument("--tol", type=float)
        p.add_argument("--workers", type=int)
        if seed:
            p.add_argument("--seed", type=int)

    def source(p):
        p.add_argument("--problem", help="problem JSON file")
        p.add_argument("--grid", help="grid text file")
        p.add_argument("--beta", type=float)

    def gains(p):
        p.add_argument("--gamma", type=float, help="constant gain")
        p.add_argument("--rm", help="Robbins-Monro gains a,b,p: a/(b+k)^p")

    p = sub.add_parser("solve", help="Perron pair, policy and value function")
    common(p, seed=False)
    source(p)

    p = sub.add_parser("learn", help="run one learner and record its trajectory")
    common(p)
    source(p)
    gains(p)
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--steps", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--x0", type=int)
    p.add_argument("--reference", action="store_true", default=None,
                   help="solve for z* and record the error column")

    p = sub.add_parser("benchmark", help="learners against the relaxed power method")
    common(p)
    source(p)
    p.add_argument("--gamma", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--seeds", type=int, help="number of learner seeds split off --seed")

    p = sub.add_parser("stability", help="fuzz the stability of the KL-learning equilibrium")
    common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--n", type=int, help="fixed matrix size")
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    p.add_argument("--d-mode", choices=odeanalysis.D_MODES)

    p = sub.add_parser("ode", help="distance between learner paths and the mean-field ODE")
    common(p)
    source(p)
    gains(p)
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--seeds", type=int)
    p.add_argument("--windows", help="comma-separated window start times")
    p.add_argument("--window-length", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--synthetic-zero", action="store_true", default=None,
                   help="use a problem whose learner and ODE never move")
    return parser


def resolve_config(args) -> dict:
    """Config file values overridden by explicitly given flags."""
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise InputError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    flags = {k: v for k, v in vars(args).items()
             if v is not None and k not in ("config", "command", "verbose")}
    cfg.update(flags)
    return cfg


def _fail(code, exc) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except StateCorrupt as exc:
        return _fail(EXIT_STATE_CORRUPT, exc)
    except NoConvergence as exc:
        return _fail(EXIT_NO_CONVERGENCE, exc)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_INPUT, exc)


if __name__ == "__main__":
    sys.exit(main())

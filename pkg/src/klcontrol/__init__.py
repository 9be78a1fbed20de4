"""Average-cost KL control: Perron-pair solvers, stochastic learners and their ODE analysis."""

from .klproblem import (
    LAMBDA_SUM,
    UNIT_SUM,
    Eigenpair,
    KLProblem,
    average_cost,
    build_h,
    controlled_stationary,
    normalize_costs,
    optimal_policy,
    rank_one_solution,
    renormalize,
    solve_power,
    solve_relaxed,
    value_function,
)
from .learners import KL, KL_PROJECTED, Z, Trajectory, run_learner, run_sg
from .markov import StochasticMatrix, stationary_distribution, validate_stochastic
from .odeanalysis import StabilityReport, conjecture_fuzz, stability_report
from .schedules import Constant, RobbinsMonro

__version__ = "0.1.0"

__all__ = [
    "LAMBDA_SUM", "UNIT_SUM", "Eigenpair", "KLProblem", "average_cost", "build_h",
    "controlled_stationary", "normalize_costs", "optimal_policy", "rank_one_solution",
    "renormalize", "solve_power", "solve_relaxed", "value_function",
    "KL", "KL_PROJECTED", "Z", "Trajectory", "run_learner", "run_sg",
    "StochasticMatrix", "stationary_distribution", "validate_stochastic",
    "StabilityReport", "conjecture_fuzz", "stability_report",
    "Constant", "RobbinsMonro",
]

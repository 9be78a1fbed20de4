"""Step-size (gain) schedules for stochastic approximation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSchedule


@dataclass(frozen=True)
class Constant:
    gamma: float

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise InvalidSchedule(f"constant gain must lie in (0, 1], got {self.gamma}")

    def gains(self, k) -> np.ndarray:
        return np.full(np.shape(k), self.gamma, dtype=float)

    def describe(self) -> dict:
        return {"kind": "constant", "gamma": self.gamma}


@dataclass(frozen=True)
class RobbinsMonro:
    """``gamma_k = a / (b + k)**p`` with ``1/2 < p <= 1``.

    The exponent range gives ``sum gamma_k = inf`` and ``sum gamma_k**2 < inf``.
    """

    a: float
    b: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        if not (0.5 < self.p <= 1.0):
            raise InvalidSchedule(f"exponent p must lie in (0.5, 1], got {self.p}")
        if self.a <= 0:
            raise InvalidSchedule(f"a must be positive, got {self.a}")
        if self.b < 0:
            raise InvalidSchedule(f"b must be nonnegative, got {self.b}")

    def gains(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return self.a / (self.b + k) ** self.p

    def describe(self) -> dict:
        return {"kind": "robbins_monro", "a": self.a, "b": self.b, "p": self.p}


StepSchedule = Constant | RobbinsMonro


def schedule_gamma(schedule: StepSchedule, k: int) -> float:
    """Gain at step ``k >= 1``."""
    if k < 1:
        raise ValueError("step index starts at 1")
    return float(schedule.gains(k))


def schedule_from_dict(d: dict) -> StepSchedule:
    kind = d.get("kind")
    if kind == "constant":
        return Constant(float(d["gamma"]))
    if kind == "robbins_monro":
        return RobbinsMonro(float(d["a"]), float(d.get("b", 0.0)), float(d.get("p", 1.0)))
    raise InvalidSchedule(f"unknown schedule kind {kind!r}")

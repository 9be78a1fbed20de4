"""Exception hierarchy.

Input problems derive from :class:`ValueError`, numerical failures from
:class:`RuntimeError`, so callers can catch broadly or precisely.
"""


class NegativeEntry(ValueError):
    def __init__(self, row, col, value):
        super().__init__(f"negative entry {value!r} at ({row}, {col})")
        self.row, self.col, self.value = row, col, value


class RowSumMismatch(ValueError):
    def __init__(self, row, total):
        super().__init__(f"row {row} sums to {total!r}, expected 1")
        self.row, self.total = row, total


class LengthMismatch(ValueError):
    pass


class NotErgodic(ValueError):
    pass


class NotIrreducible(NotErgodic):
    pass


class BetaNonPositive(ValueError):
    pass


class ResidualTooLarge(ValueError):
    pass


class NotReversible(ValueError):
    pass


class NotStateCost(ValueError):
    pass


class NotSymmetric(ValueError):
    pass


class LambdaNonPositive(ValueError):
    pass


class WrongNormalization(ValueError):
    pass


class EmptyOverlap(ValueError):
    pass


class InvalidSchedule(ValueError):
    pass


class InconsistentState(ValueError):
    """Initial learner state violates the bookkeeping ``lambda == sum(z)``."""


class DegenerateGrid(ValueError):
    pass


class GridParseError(ValueError):
    pass


class NonRectangular(GridParseError):
    pass


class MultipleGoals(GridParseError):
    pass


class NoGoal(GridParseError):
    pass


class UnknownChar(GridParseError):
    def __init__(self, char, row, col):
        super().__init__(f"unknown character {char!r} at line {row}, column {col}")
        self.char, self.position = char, (row, col)


class NoConvergence(RuntimeError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class EigenNoConvergence(NoConvergence):
    pass


class StateCorrupt(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class Blowup(RuntimeError):
    pass


class StabilityViolation(AssertionError):
    """A proven stability/nonsingularity property failed numerically."""

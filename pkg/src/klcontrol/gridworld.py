"""Wall-grid benchmark problems.

Every cell is a state, walls included: walls are expensive, not forbidden.
The uncontrolled walk moves left, right, up, down or stays, uniformly over
the moves that remain inside the grid. Costs are charged at the departure
cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGrid, LengthMismatch, MultipleGoals, NoGoal, NonRectangular, UnknownChar
from .klproblem import KLProblem
from .markov import validate_stochastic

FREE, WALL, GOAL = ".", "#", "G"
_MOVES = ((0, 0), (0, -1), (0, 1), (-1, 0), (1, 0))


@dataclass(frozen=True)
class GridLayout:
    rows: int
    cols: int
    walls: frozenset = frozenset()
    goal: tuple | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DegenerateGrid("grid dimensions must be at least 1")
        goal = (self.rows - 1, self.cols - 1) if self.goal is None else tuple(self.goal)
        object.__setattr__(self, "goal", goal)
        object.__setattr__(self, "walls", frozenset(tuple(w) for w in self.walls))
        if not (0 <= goal[0] < self.rows and 0 <= goal[1] < self.cols):
            raise DegenerateGrid(f"goal {goal} outside the grid")
        if goal in self.walls:
            raise DegenerateGrid("goal cell cannot be a wall")
        if any(not (0 <= r < self.rows and 0 <= c < self.cols) for r, c in self.walls):
            raise DegenerateGrid("wall outside the grid")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    def index(self, r, c) -> int:
        return r * self.cols + c

    def wall_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        for r, c in self.walls:
            mask[self.index(r, c)] = True
        return mask


@dataclass(frozen=True)
class GridCosts:
    step_cost: float = 1.0
    wall_cost: float = 100.0
    goal_cost: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite([self.step_cost, self.wall_cost, self.goal_cost])):
            raise ValueError("grid costs must be finite")
        if self.wall_cost < self.step_cost:
            raise ValueError("wall_cost must be at least step_cost")


DEFAULT_GRID = """\
..........
..........
....#.....
....#.....
....#.....
....#.....
....#.....
....####..
..........
.........G
"""


def default_layout() -> GridLayout:
    """10x10 grid with an L-shaped interior wall; goal bottom right."""
    return parse_grid(DEFAULT_GRID)


def uncontrolled_dynamics(layout: GridLayout, boundary="feasible") -> np.ndarray:
    """Random-walk matrix of the grid.

    ``boundary="feasible"`` spreads mass uniformly over in-bounds moves;
    ``boundary="stay"`` gives every move 1/5 and sends blocked mass to "stay".
    """
    n = layout.n
    q = np.zeros((n, n))
    for r in range(layout.rows):
        for c in range(layout.cols):
            i = layout.index(r, c)
            targets = [(r + dr, c + dc) for dr, dc in _MOVES
                       if 0 <= r + dr < layout.rows and 0 <= c + dc < layout.cols]
            if boundary == "feasible":
                for rr, cc in targets:
                    q[i, layout.index(rr, cc)] += 1.0 / len(targets)
            elif boundary == "stay":
                for rr, cc in targets:
                    q[i, layout.index(rr, cc)] += 0.2
                q[i, i] += 0.2 * (5 - len(targets))
            else:
                raise ValueError(f"unknown boundary mode {boundary!r}")
    return q


def state_costs(layout: GridLayout, costs: GridCosts = GridCosts()) -> np.ndarray:
    cvec = np.full(layout.n, costs.step_cost)
    cvec[layout.wall_mask()] = costs.wall_cost
    cvec[layout.index(*layout.goal)] = costs.goal_cost
    return cvec


def build_gridworld(layout: GridLayout, costs: GridCosts = GridCosts(), beta=1.0,
                    boundary="feasible") -> KLProblem:
    """KL problem of the grid: random-walk ``q`` and departure-cell state costs."""
    q = validate_stochastic(uncontrolled_dynamics(layout, boundary))
    return KLProblem.from_state_costs(q, state_costs(layout, costs), beta)


def parse_grid(text: str) -> GridLayout:
    """Parse rows of ``.`` (free), ``#`` (wall) and exactly one ``G`` (goal).

    Cells are indexed row-major: state id = ``row * cols + col``.
    """
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DegenerateGrid("empty grid")
    cols = len(lines[0])
    if cols == 0 or any(len(ln) != cols for ln in lines):
        raise NonRectangular("all grid lines must have the same non-zero length")
    walls, goals = set(), []
    for r, ln in enumerate(lines):
        for c, ch in enumerate(ln):
            if ch == WALL:
                walls.add((r, c))
            elif ch == GOAL:
                goals.append((r, c))
            elif ch != FREE:
                raise UnknownChar(ch, r, c)
    if not goals:
        raise NoGoal("grid has no goal cell 'G'")
    if len(goals) > 1:
        raise MultipleGoals(f"grid has {len(goals)} goal cells")
    return GridLayout(len(lines), cols, frozenset(walls), goals[0])


def format_grid(layout: GridLayout) -> str:
    out = []
    for r in range(layout.rows):
        row = []
        for c in range(layout.cols):
            if (r, c) == layout.goal:
                row.append(GOAL)
            elif (r, c) in layout.walls:
                row.append(WALL)
            else:
                row.append(FREE)
        out.append("".join(row))
    return "\n".join(out) + "\n"


def export_heatmap(values, layout: GridLayout) -> str:
    """Values laid out in grid geometry as header-less CSV.

    Numbers use the shortest representation that round-trips exactly
    (at most 17 significant digits).
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (layout.n,):
        raise LengthMismatch(f"expected {layout.n} values, got {values.shape}")
    grid = values.reshape(layout.rows, layout.cols)
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in grid)

# %% [markdown]
# # Solving the walled gridworld exactly
#
# The 10x10 grid with an L-shaped wall is turned into a KL control problem,
# solved by power iteration, and the value function is printed in grid
# geometry. Walls are expensive rather than forbidden, so the optimal
# dynamics route around them.

# %%
import numpy as np

from klcontrol.gridworld import build_gridworld, default_layout, export_heatmap, format_grid
from klcontrol.klproblem import average_cost, build_h, optimal_policy, solve_power, value_function

layout = default_layout()
print(format_grid(layout))
problem = build_gridworld(layout, beta=1.0)

# %%
e = solve_power(build_h(problem))
print(f"lambda* = {e.lam:.6f}, average cost per step = {average_cost(e.lam, problem.beta):.4f}")
print(f"power iterations: {e.iterations}")

# %% [markdown]
# Lower values mean cheaper to reach the goal. Cells behind the wall pay for
# the detour.

# %%
phi = value_function(e, problem.beta)
heat = export_heatmap(np.round(phi - phi.min(), 2), layout)
print(heat)

# %%
p = optimal_policy(problem, e)
start = layout.index(0, 0)
print("most likely controlled move from the top-left corner:",
      divmod(int(np.argmax(p.p[start])), layout.cols))

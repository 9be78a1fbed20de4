# %% [markdown]
# # KL-learning, Z-learning and the relaxed power method
#
# Costs are first shifted so that the Perron root is one, which is what
# Z-learning needs. The two learners then use one sampled transition per
# step while the power method pays for a full sparse matrix-vector product
# per iteration; both axes are shown.

# %%
import numpy as np

from klcontrol.benchmark import run_benchmark
from klcontrol.gridworld import build_gridworld, default_layout

problem = build_gridworld(default_layout(), beta=1.0)
res = run_benchmark(problem, gamma=0.05, steps=100_000, seed=0, n_seeds=5)
kl, z = res.median_curves()

# %%
print(f"{'step':>8} {'KL err':>8} {'Z err':>8}")
for i in np.linspace(0, len(res.k) - 1, 11).astype(int):
    print(f"{res.k[i]:>8} {kl[i]:>8.4f} {z[i]:>8.4f}")

# %% [markdown]
# On the operation axis one power iteration costs ``nnz(H)`` operations.

# %%
ops = res.power_ops_to(0.01)
print(f"nnz(H) = {res.nnz}; power method reaches 0.01 after {ops} operations "
      f"({ops // res.nnz} iterations)")
print(f"KL-learning final error after {res.k[-1]} operations: {kl[-1]:.4f}")

# %% [markdown]
# # Learner paths against the mean-field ODE
#
# On a two-state problem the interpolated KL-learning path is compared with
# Euler solutions of the mean-field ODE started from the learner's own
# state. As gains shrink, the ODE describes the learner over a fixed window
# of algorithmic time ever more closely.

# %%
import numpy as np

from klcontrol.benchmark import derive_seeds
from klcontrol.cli import two_state_example
from klcontrol.odeanalysis import tracking_distances
from klcontrol.schedules import RobbinsMonro

problem = two_state_example()
windows = [1.0, 5.0, 25.0]
d = tracking_distances(problem, RobbinsMonro(1, 1, 0.7), derive_seeds(0, 10), windows)

# %%
for start, col in zip(windows, d.T):
    print(f"window from t = {start:>4}: median sup-distance {np.median(col):.4f}, "
          f"max {col.max():.4f}")

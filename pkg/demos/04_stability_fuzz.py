# %% [markdown]
# # Is the KL-learning equilibrium stable for every positive D?
#
# The linearisation at the equilibrium is ``D(H - lam* I - z* 1^T)``. It is
# provably stable in a few special cases; for general positive diagonal
# ``D`` a random search turns up rare instances with a small unstable
# complex pair. Each one is re-checked at 50 digits.

# %%
import io
import json

from klcontrol.odeanalysis import conjecture_fuzz, fuzz_instance, stability_report_matrix

sink = io.StringIO()
summary = conjecture_fuzz((3, 12), 1000, seed=1, report_sink=sink)
print(f"stable: {summary['stable_count']}/{summary['count']}, "
      f"verified counterexamples: {summary['verified_counterexamples']}")

# %% [markdown]
# Instance 688 of root seed 1 is one such case.

# %%
n, H, D = fuzz_instance(1, 688, (3, 12), "uniform")
rep = stability_report_matrix(H, D, strict=False)
print(f"n = {n}, spectral abscissa = {rep.spectral_abscissa:.3e}, stable = {rep.strictly_stable}")
cand = next(c for c in summary["candidates"] if c["seed"] == [1, 688])
print("50-digit abscissa:", cand["extended_abscissa"])
print(json.dumps({k: cand[k] for k in ("seed", "n", "verified")}))

# %% [markdown]
# The same search with ``D`` set to the stationary law of the chain, which
# is the case the learner actually induces, finds nothing.

# %%
stationary = conjecture_fuzz((3, 12), 1000, seed=1, d_mode="stationary")
print(f"stationary D: {stationary['stable_count']}/{stationary['count']} stable")

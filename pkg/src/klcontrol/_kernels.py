"""Compiled inner loops for the stochastic learners.

Each call advances one chunk of steps from pre-drawn uniforms and gains,
so the random stream stays under numpy's control and runs are
bit-reproducible. Status codes instead of exceptions keep the loops
nopython-compatible; the Python driver translates them.
"""

import numpy as np
from numba import njit

KL = 0
KL_PROJECTED = 1
Z = 2

OK = 0
NONPOSITIVE = 1
OUT_OF_K = 2
DRIFT = 3
DIVERGED = 4

DRIFT_TOL = 1e-9
_SLACK = 1e-12


@njit(cache=True, inline="always")
def _draw(cdf_row, u):
    lo = 0
    hi = cdf_row.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf_row[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def learner_chunk(algo, z, lam, x, weight, cdf, uniforms, gammas, k0, lam_min, m_bound,
                  stride, resync, record_last, snap_k, snap_lam, snap_x, snap_z, snap_proj,
                  proj, max_drift):
    """Run ``len(uniforms)`` steps in place on ``z``.

    Returns ``(lam, x, steps_done, n_snapshots, proj, max_drift, status)``.
    """
    n = z.shape[0]
    n_steps = uniforms.shape[0]
    upper = n * m_bound * (1.0 + _SLACK)
    zcap = m_bound * (1.0 + _SLACK)
    lam_floor = lam_min * (1.0 - _SLACK)
    nsnap = 0
    status = OK
    done = 0
    for s in range(n_steps):
        k = k0 + s + 1
        g = gammas[s]
        y = _draw(cdf[x], uniforms[s])
        projected = False
        if algo == Z:
            delta = weight[x, y] * z[y] - z[x]
        else:
            delta = weight[x, y] * z[y] / lam - z[x]
            if algo == KL_PROJECTED:
                floor = (lam_min - lam) / g
                if delta < floor:
                    delta = floor
                    projected = True
        z[x] += g * delta
        if projected:
            lam = lam_min
            proj += 1
        else:
            lam += g * delta
        done = s + 1
        if algo == Z:
            if not (np.isfinite(z[x]) and z[x] >= 0.0):
                status = NONPOSITIVE
            elif lam > 1e200 or lam < 1e-200:
                status = DIVERGED
        else:
            if not (z[x] > 0.0 and np.isfinite(z[x]) and lam > 0.0):
                status = NONPOSITIVE
            elif algo == KL_PROJECTED and (z[x] > zcap or lam < lam_floor or lam > upper):
                status = OUT_OF_K
        x = y
        if status == OK and algo != Z and resync > 0 and k % resync == 0:
            tot = z.sum()
            drift = abs(lam - tot)
            if drift > max_drift:
                max_drift = drift
            if drift > DRIFT_TOL:
                status = DRIFT
            lam = tot
        if k % stride == 0 or (record_last and s == n_steps - 1) or status != OK:
            snap_k[nsnap] = k
            snap_lam[nsnap] = lam
            snap_x[nsnap] = x
            snap_proj[nsnap] = proj
            for i in range(n):
                snap_z[nsnap, i] = z[i]
            nsnap += 1
        if status != OK:
            break
    return lam, x, done, nsnap, proj, max_drift, status


@njit(cache=True)
def sg_quadratic_chunk(theta, x, A, theta_star, cdf, uniforms, gammas):
    """Stochastic gradient steps for ``h = 0.5 (t - t*)^T A (t - t*)``.

    The partial derivative is observed at the new state and applied to the
    coordinate of the previous state.
    """
    n = theta.shape[0]
    for s in range(uniforms.shape[0]):
        y = _draw(cdf[x], uniforms[s])
        partial = 0.0
        for j in range(n):
            partial += A[y, j] * (theta[j] - theta_star[j])
        theta[x] -= gammas[s] * partial
        x = y
    return x

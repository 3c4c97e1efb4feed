"""Compiled inner loop for the linear step of the monotone iteration.

Coefficients arrive pre-sampled on the half grid (``2N + 1`` samples), so
stage ``t_i`` reads index ``2i``, the midpoint ``2i - 1`` and ``t_{i-1}``
reads ``2i - 2``. Matrices are tiny; explicit loops beat BLAS dispatch.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _mm(a, b):
    n = a.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for k in range(n):
            aik = a[i, k]
            if aik != 0.0:
                for j in range(n):
                    out[i, j] += aik * b[k, j]
    return out


@nb.njit(cache=True)
def _picard_rhs(x, a, b, q, xp):
    n = x.shape[0]
    ax = _mm(a, x)
    bxb = _mm(_mm(b, x), b.T)
    qxp = _mm(q, xp)
    xq = _mm(x, qxp)
    pqp = _mm(xp, qxp)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = ax[i, j] + ax[j, i] - bxb[i, j] + xq[i, j] + xq[j, i] - pqp[i, j]
    return out


@nb.njit(cache=True)
def picard_rk4(a_half, b_half, q_half, xp_half, terminal, dt, guard):
    """Backward RK4 for the linear Picard step.

    Returns ``(values, last_finite, sym_drift)``; ``last_finite`` is -1 when
    the whole path stayed inside ``guard``.
    """
    N = (a_half.shape[0] - 1) // 2
    n = terminal.shape[0]
    values = np.full((N + 1, n, n), np.nan)
    y = 0.5 * (terminal + terminal.T)
    values[N] = y
    drift = 0.0
    h = -dt
    for i in range(N, 0, -1):
        k0, km, k1 = 2 * i, 2 * i - 1, 2 * i - 2
        s1 = _picard_rhs(y, a_half[k0], b_half[k0], q_half[k0], xp_half[k0])
        s2 = _picard_rhs(y + 0.5 * h * s1, a_half[km], b_half[km], q_half[km], xp_half[km])
        s3 = _picard_rhs(y + 0.5 * h * s2, a_half[km], b_half[km], q_half[km], xp_half[km])
        s4 = _picard_rhs(y + h * s3, a_half[k1], b_half[k1], q_half[k1], xp_half[k1])
        y_new = y + h / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
        bad = False
        for r in range(n):
            for c in range(n):
                v = y_new[r, c]
                if not np.isfinite(v) or abs(v) > guard:
                    bad = True
        if bad:
            return values, i, drift
        sym = 0.5 * (y_new + y_new.T)
        for r in range(n):
            for c in range(n):
                d = abs(sym[r, c] - y_new[r, c])
                if d > drift:
                    drift = d
        values[i - 1] = sym
        y = sym
    return values, -1, drift

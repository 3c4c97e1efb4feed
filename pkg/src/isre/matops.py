"""Dense symmetric-matrix kernels.

Everything here is a pure function of its arguments. Matrices are plain
``numpy.ndarray`` objects of shape ``(n, n)``; batched variants accept a
leading stack axis.
"""

import numpy as np
import scipy.linalg

from .errors import NonFinite, NonSymmetric, NotPositiveDefinite

SYM_TOL = 1e-12
PD_TOL = 1e-10


def symmetrize(m):
    """Return ``(M + M') / 2``; works on a stack of matrices too."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def symmetry_defect(m):
    m = np.asarray(m, dtype=float)
    return float(np.max(np.abs(m - np.swapaxes(m, -1, -2)), initial=0.0))


def _check_symmetric(s):
    s = np.asarray(s, dtype=float)
    if s.ndim < 2 or s.shape[-1] != s.shape[-2]:
        raise NonSymmetric(f"expected square matrix, got shape {s.shape}")
    scale = 1.0 + float(np.max(np.abs(s), initial=0.0))
    if symmetry_defect(s) > SYM_TOL * scale:
        raise NonSymmetric(f"asymmetry {symmetry_defect(s):.3e} exceeds tolerance")
    return s


def eig_extremes(s):
    """Smallest and largest eigenvalue of a symmetric matrix (or stack)."""
    s = _check_symmetric(s)
    w = np.linalg.eigvalsh(symmetrize(s))
    return w[..., 0], w[..., -1]


def min_eig(s):
    s = _check_symmetric(s)
    w = np.linalg.eigvalsh(symmetrize(s))[..., 0]
    return float(w) if np.ndim(w) == 0 else w


def max_eig(s):
    s = _check_symmetric(s)
    w = np.linalg.eigvalsh(symmetrize(s))[..., -1]
    return float(w) if np.ndim(w) == 0 else w


def is_pd(s, tol=PD_TOL):
    return bool(np.all(min_eig(s) > tol))


def is_psd(s, tol=PD_TOL):
    return bool(np.all(min_eig(s) >= -tol))


def inv_pd(s, tol=1e-12):
    """Inverse of a symmetric positive definite matrix, symmetrized.

    Raises NotPositiveDefinite when ``min_eig(s) <= tol``.
    """
    s = _check_symmetric(s)
    lo = min_eig(s)
    if lo <= tol:
        raise NotPositiveDefinite(f"matrix is not positive definite (min eig {lo:.3e})",
                                  min_eig=lo)
    c, low = scipy.linalg.cho_factor(symmetrize(s))
    inv = scipy.linalg.cho_solve((c, low), np.eye(s.shape[-1]))
    return symmetrize(inv)


def mat_exp(m):
    """Matrix exponential (scaling and squaring with a Pade core)."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise NonFinite("mat_exp received non-finite entries")
    return scipy.linalg.expm(m)

"""Problem generators shared by the unit and acceptance tests."""

import numpy as np

from isre.backward import LinearBSDEData
from isre.problem import CoefficientSet, GaugeSpec, SREProblem


def sym(m):
    return 0.5 * (m + m.T)


def random_pd(rng, n, lo=0.5, hi=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return sym(q @ np.diag(rng.uniform(lo, hi, n)) @ q.T)


def random_psd(rng, n, scale=0.7):
    L = scale * rng.standard_normal((n, n))
    return L @ L.T


def random_indefinite(rng, n, lo=0.5, hi=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    signs = rng.choice([-1.0, 1.0], n)
    if n > 1:
        signs[0], signs[1] = 1.0, -1.0
    return sym(q @ np.diag(signs * rng.uniform(lo, hi, n)) @ q.T)


def scalar_problem(q=2.0, h=1.0, r=0.0, T=1.0, N=2000):
    z = np.zeros((1, 1))
    return SREProblem(CoefficientSet(z, z, z, [[q]]), GaugeSpec.constant([[r]]), [[h]], T, N)


def _normal_sym_norm(m):
    return float(np.max(np.abs(np.linalg.eigvalsh(sym(m)))))


def suite_instance(seed, N=2000, T=1.0):
    """One member of the randomized suite; the family rotates with ``seed``.

    family 0: constant indefinite R with B, C coupled so that RB + C'R = 0
    family 1: B = C = 0 and an indefinite ramp R(t) = R0 + t F
    family 2: R = 0 with arbitrary B, C
    In every family Qtil is PSD and eta = (R(T) + H)^{-1} is PD by construction.
    """
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.choice([1, 2, 3]))
    family = seed % 3
    atil = 0.5 * rng.standard_normal((n, n))
    qtil0 = random_psd(rng, n)
    eta = random_pd(rng, n)
    if family == 0:
        R = random_indefinite(rng, n) if n > 1 else np.array([[rng.choice([-1, 1]) * rng.uniform(0.5, 2)]])
        B = 0.5 * rng.standard_normal((n, n))
        C = -np.linalg.solve(R, B.T @ R)
        A = atil + B @ C
        Q = qtil0 - (C.T @ R @ C + R @ (B @ C - A) + (C.T @ B.T - A.T) @ R)
        gauge = GaugeSpec.constant(R)
        R_T = R
    elif family == 1:
        B = C = np.zeros((n, n))
        A = atil
        R0 = random_indefinite(rng, n) if n > 1 else np.array([[-rng.uniform(0.5, 2)]])
        F = sym(rng.standard_normal((n, n)))
        c = max(_normal_sym_norm(R0 @ A + A.T @ R0),
                _normal_sym_norm((R0 + T * F) @ A + A.T @ (R0 + T * F)))
        Q = F + qtil0 + c * np.eye(n)
        gauge = GaugeSpec.ramp(R0, F)
        R_T = R0 + T * F
    else:
        B = 0.5 * rng.standard_normal((n, n))
        C = 0.5 * rng.standard_normal((n, n))
        A = atil + B @ C
        Q = qtil0
        gauge = GaugeSpec.constant(np.zeros((n, n)))
        R_T = np.zeros((n, n))
    H = sym(np.linalg.inv(eta) - R_T)
    return SREProblem(CoefficientSet(A, B, C, sym(Q)), gauge, H, T, N)


def definite_instance(seed, N=2000, T=1.0):
    """Definite-case instance: R > 0, Q >= 0, H > 0, with Rtil = 0 and Qtil >= 0."""
    rng = np.random.default_rng(5000 + seed)
    n = int(rng.choice([1, 2, 3]))
    family = seed % 3
    A = 0.5 * rng.standard_normal((n, n))
    Q0 = random_psd(rng, n)
    H = random_pd(rng, n)
    if family == 0:
        R = random_pd(rng, n)
        B = C = np.zeros((n, n))
        c = max(np.linalg.eigvalsh(sym(R @ A + A.T @ R))[-1], 0.0)
        gauge = GaugeSpec.constant(R)
    elif family == 1:
        R = random_pd(rng, n)
        B = 0.5 * rng.standard_normal((n, n))
        C = -np.linalg.solve(R, B.T @ R)
        M = sym(R @ A + A.T @ R + R @ B @ np.linalg.solve(R, B.T @ R))
        c = max(np.linalg.eigvalsh(M)[-1], 0.0)
        gauge = GaugeSpec.constant(R)
    else:
        R0 = random_pd(rng, n, 1.0, 2.0)
        F = 0.4 * sym(rng.uniform(-1, 1, (n, n)))
        B = C = np.zeros((n, n))
        c = _normal_sym_norm(F) + max(_normal_sym_norm(R0 @ A + A.T @ R0),
                                      _normal_sym_norm((R0 + T * F) @ A + A.T @ (R0 + T * F)))
        gauge = GaugeSpec.ramp(R0, F)
    Q = Q0 + c * np.eye(n)
    return SREProblem(CoefficientSet(A, B, C, sym(Q)), gauge, H, T, N)


def oracle_instance(seed):
    """Small random linear-equation data with PSD source and PD terminal."""
    rng = np.random.default_rng(9000 + seed)
    n = int(rng.choice([1, 2]))
    data = LinearBSDEData(0.4 * rng.standard_normal((n, n)), 0.4 * rng.standard_normal((n, n)),
                          random_psd(rng, n, 0.5), random_pd(rng, n))
    p = rng.standard_normal(n)
    return data, p

"""Monte Carlo layer: Brownian ensembles, the forward linear SDE, the
Feynman-Kac estimate of the linear equation, and the pathwise gauge generator.

Random numbers are drawn block by block. Block ``b`` always holds paths
``b * BLOCK .. (b + 1) * BLOCK - 1`` and its generator is seeded from
``(seed, b)``, so an ensemble is a pure function of ``(seed, n_paths, grid)``
no matter how many workers build it.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import matops
from .backward import OVERFLOW_GUARD
from .errors import BlowUpDetected, GridMismatch
from .paths import MatPath, TimeGrid, as_coefficient

BLOCK = 4096
# Euler-Maruyama weak-bias allowance per unit dt, calibrated against exact
# discrete second moments on the closed-form and randomized oracle suites.
BIAS_C = 5.0


@dataclass(frozen=True)
class BrownianEnsemble:
    seed: int
    n_paths: int
    grid: TimeGrid
    increments: np.ndarray
    antithetic: bool = False

    @property
    def W(self):
        """Path values ``W(t_i)`` with ``W(0) = 0``, shape ``(n_paths, N + 1)``."""
        w = np.zeros((self.n_paths, self.grid.N + 1))
        np.cumsum(self.increments, axis=1, out=w[:, 1:])
        return w

    def path(self, k):
        return self.increments[k]


def _block(seed, b, rows, N, dt, antithetic):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(b,)))
    if antithetic:
        half = rng.standard_normal(((rows + 1) // 2, N)) * math.sqrt(dt)
        out = np.empty((rows, N))
        out[0::2] = half
        out[1::2] = -half[: rows // 2]
        return out
    return rng.standard_normal((rows, N)) * math.sqrt(dt)


def brownian_ensemble(seed, n_paths, grid, antithetic=False, threads=1):
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    n_blocks = -(-n_paths // BLOCK)
    rows = [min(BLOCK, n_paths - b * BLOCK) for b in range(n_blocks)]
    args = [(seed, b, rows[b], grid.N, grid.dt, antithetic) for b in range(n_blocks)]
    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(lambda a: _block(*a), args))
    else:
        blocks = [_block(*a) for a in args]
    return BrownianEnsemble(int(seed), int(n_paths), grid, np.concatenate(blocks), antithetic)


def simulate_forward_sde(Ahat, Chat, p, increments, grid):
    """Euler-Maruyama for ``dxi = Ahat xi dt + Chat xi dW``, ``xi(0) = p``.

    ``increments`` is one path (shape ``(N,)``) or a stack ``(m, N)``; the
    result has shape ``(N + 1, n)`` or ``(m, N + 1, n)`` respectively.
    """
    A = as_coefficient(Ahat).on_grid(grid)
    C = as_coefficient(Chat).on_grid(grid)
    dW = np.asarray(increments, dtype=float)
    single = dW.ndim == 1
    dW = np.atleast_2d(dW)
    if dW.shape[1] != grid.N:
        raise GridMismatch(f"{dW.shape[1]} increments for a grid of {grid.N} steps")
    p = np.asarray(p, dtype=float).ravel()
    xi = np.empty((len(dW), grid.N + 1, len(p)))
    xi[:, 0] = p
    dt = grid.dt
    for i in range(grid.N):
        x = xi[:, i]
        xi[:, i + 1] = x + dt * x @ A[i].T + dW[:, i, None] * (x @ C[i].T)
    return xi[0] if single else xi


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n_paths: int

    def to_dict(self):
        return {"value": self.value, "stderr": self.stderr, "n_paths": self.n_paths}


def _summarize(samples):
    n = len(samples)
    mean = math.fsum(samples) / n
    if n < 2:
        return McEstimate(mean, 0.0, n)
    var = math.fsum((samples - mean) ** 2) / (n - 1)
    return McEstimate(mean, math.sqrt(var / n), n)


def representation_payoffs(data, p, ensemble):
    """Per-path ``xi_T' Hhat xi_T + int_0^T xi' Qhat xi ds`` (trapezoidal)."""
    grid = ensemble.grid
    for coef in (data.Ahat, data.Chat, data.Qhat):
        coef.check_grid(grid)
    xi = simulate_forward_sde(data.Ahat, data.Chat, p, ensemble.increments, grid)
    Q = data.Qhat.on_grid(grid)
    running = np.einsum("mti,tij,mtj->mt", xi, Q, xi)
    integral = grid.dt * (0.5 * running[:, 0] + running[:, 1:-1].sum(axis=1) + 0.5 * running[:, -1])
    terminal = np.einsum("mi,ij,mj->m", xi[:, -1], data.Hhat, xi[:, -1])
    return terminal + integral


def mc_representation(data, p, ensemble, chunk=BLOCK):
    """Monte Carlo estimate of ``p' Y(0) p``.

    Paths are simulated in fixed chunks to bound memory; the reduction uses
    exactly rounded summation so chunking cannot change the result.
    """
    payoffs = np.concatenate([
        representation_payoffs(data, p, _slice(ensemble, s, s + chunk))
        for s in range(0, ensemble.n_paths, chunk)
    ])
    return _summarize(payoffs)


def _slice(ensemble, start, stop):
    inc = ensemble.increments[start:stop]
    return BrownianEnsemble(ensemble.seed, len(inc), ensemble.grid, inc, ensemble.antithetic)


def oracle_agrees(estimate, reference, dt, bias_c=BIAS_C, sigmas=3.0):
    """``|estimate - reference| <= sigmas * stderr + bias_c * dt``."""
    allowance = sigmas * estimate.stderr + bias_c * dt
    return abs(estimate.value - reference) <= allowance, allowance


def euler_second_moment(Ahat, Chat, Qhat, Hhat, p, grid):
    """Exact expectation of the Euler-Maruyama payoff for deterministic data.

    With ``M_i = E[xi_i xi_i']`` the scheme gives
    ``M_{i+1} = (I + A dt) M_i (I + A dt)' + dt C M_i C'``; the payoff mean is
    then linear in the ``M_i``. This isolates the discretization bias from
    sampling noise.
    """
    A = as_coefficient(Ahat).on_grid(grid)
    C = as_coefficient(Chat).on_grid(grid)
    Q = as_coefficient(Qhat).on_grid(grid)
    H = np.atleast_2d(np.asarray(Hhat, dtype=float))
    p = np.asarray(p, dtype=float).ravel()
    dt = grid.dt
    M = np.outer(p, p)
    run = [np.sum(Q[0] * M)]
    eye = np.eye(len(p))
    for i in range(grid.N):
        E = eye + dt * A[i]
        M = E @ M @ E.T + dt * C[i] @ M @ C[i].T
        run.append(np.sum(Q[i + 1] * M))
    run = np.array(run)
    return float(np.sum(H * M) + dt * (0.5 * run[0] + run[1:-1].sum() + 0.5 * run[-1]))


def generate_gauge(B, C, F, S0, increments, grid, overflow_guard=OVERFLOW_GUARD):
    """Gauge ``R = exp(-C' W) S exp(-B W)`` along one Brownian path.

    ``S`` solves the pathwise ODE
    ``dS/dt = exp(C' W) F exp(B W) - C' S B - C'^2 S - S B^2`` from ``S(0) = S0``
    by RK4, with ``W`` linear between grid nodes. ``B`` and ``C`` are constant.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    F = as_coefficient(F)
    S0 = np.atleast_2d(np.asarray(S0, dtype=float))
    dW = np.asarray(increments, dtype=float)
    if dW.shape != (grid.N,):
        raise GridMismatch(f"expected {grid.N} increments, got shape {dW.shape}")
    W = np.concatenate([[0.0], np.cumsum(dW)])
    Ct = C.T
    Ct2 = Ct @ Ct
    B2 = B @ B
    forced = F.is_table or np.any(F.value != 0)
    dt = grid.dt

    def forcing(t, w):
        if not forced:
            return 0.0
        return matops.mat_exp(Ct * w) @ F(t) @ matops.mat_exp(B * w)

    def rhs(t, w, s):
        return forcing(t, w) - Ct @ s @ B - Ct2 @ s - s @ B2

    S = np.empty((grid.N + 1,) + S0.shape)
    S[0] = S0
    nodes = grid.nodes
    for i in range(grid.N):
        t, s = nodes[i], S[i]
        wm = 0.5 * (W[i] + W[i + 1])
        k1 = rhs(t, W[i], s)
        k2 = rhs(t + 0.5 * dt, wm, s + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, wm, s + 0.5 * dt * k2)
        k4 = rhs(t + dt, W[i + 1], s + dt * k3)
        S[i + 1] = s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(S[i + 1])) or np.max(np.abs(S[i + 1])) > overflow_guard:
            raise BlowUpDetected(f"gauge ODE left the overflow guard at t = {nodes[i + 1]:.6g}", i)
    left = np.array([matops.mat_exp(-Ct * w) for w in W])
    right = np.array([matops.mat_exp(-B * w) for w in W])
    R = left @ S @ right
    symmetric = matops.symmetry_defect(R) <= 1e-10 * (1.0 + np.max(np.abs(R)))
    return MatPath(grid, matops.symmetrize(R) if symmetric else R, symmetric=bool(symmetric))


@dataclass
class DiffusionReport:
    max_defect_over_dt: float
    worst_step: int
    defects: np.ndarray
    sign: int

    def to_dict(self):
        return {"max_defect_over_dt": self.max_defect_over_dt, "worst_step": self.worst_step,
                "sign": self.sign}


def diffusion_defects(Rpath, B, C, increments, grid, sign=1):
    """Per-step defect of ``dR = -(RB + C'R) dW + (drift) dt``.

    ``D_i = dR_i + s (R B + C' R) dW_i - (s^2/2)(R B^2 + 2 C' R B + C'^2 R)(dW_i^2 - dt)``
    with ``s = sign``. The last term is the second-order Ito-Taylor
    companion of the compensator; without it the ``dW^2`` fluctuation is
    O(dt) with a ``log N`` growing maximum. For the correct compensator
    (``sign=1``) what is left is drift-sized, O(dt); a wrong sign leaves an
    O(sqrt(dt)) martingale remainder.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    dW = np.asarray(increments, dtype=float)
    if Rpath.grid.N != grid.N or dW.shape != (grid.N,):
        raise GridMismatch("gauge path, increments and grid disagree")
    R = Rpath.values[:-1]
    Ct = C.T
    comp = R @ B + Ct @ R
    ito = R @ B @ B + 2.0 * Ct @ R @ B + Ct @ Ct @ R
    dR = np.diff(Rpath.values, axis=0)
    return (dR + sign * comp * dW[:, None, None]
            - 0.5 * ito * (dW ** 2 - grid.dt)[:, None, None])


def verify_gauge_diffusion(Rpath, B, C, increments, grid, sign=1):
    D = diffusion_defects(Rpath, B, C, increments, grid, sign)
    norms = np.max(np.abs(D), axis=(1, 2))
    k = int(np.argmax(norms))
    return DiffusionReport(float(norms[k] / grid.dt), k, D, sign)


def coarsen(increments, factor):
    dW = np.asarray(increments, dtype=float)
    if len(dW) % factor:
        raise GridMismatch(f"{len(dW)} increments cannot be coarsened by {factor}")
    return dW.reshape(-1, factor).sum(axis=1)


@dataclass
class RefinementReport:
    ladder: list
    max_defects: list
    slope: float | None
    threshold: float
    passed: bool
    trivial: bool
    sign: int

    def to_dict(self):
        return {"ladder": list(self.ladder), "max_defects": list(self.max_defects),
                "slope": self.slope, "threshold": self.threshold, "passed": self.passed,
                "trivial": self.trivial, "sign": self.sign}


def diffusion_refinement(B, C, F, S0, T, seed, ladder=(200, 800, 3200), sign=1,
                         threshold=0.9, zero_tol=1e-13):
    """Regress ``log max|D|`` on ``log dt`` along one Brownian path.

    The path is drawn on the finest grid and summed down to coarser ones.
    A gauge without any defect at all (no diffusion and no drift) passes
    trivially and reports ``slope=None``.
    """
    ladder = sorted(int(n) for n in ladder)
    finest = TimeGrid(T, ladder[-1])
    fine = brownian_ensemble(seed, 1, finest).increments[0]
    dts, maxes = [], []
    for N in ladder:
        grid = TimeGrid(T, N)
        dW = coarsen(fine, ladder[-1] // N)
        R = generate_gauge(B, C, F, S0, dW, grid)
        rep = verify_gauge_diffusion(R, B, C, dW, grid, sign)
        dts.append(grid.dt)
        maxes.append(rep.max_defect_over_dt * grid.dt)
    scale = 1.0 + max(np.max(np.abs(np.atleast_2d(S0))), 1.0)
    if max(maxes) <= zero_tol * scale:
        return RefinementReport(ladder, maxes, None, threshold, True, True, sign)
    slope = float(np.polyfit(np.log(dts), np.log(maxes), 1)[0])
    return RefinementReport(ladder, maxes, slope, threshold, slope >= threshold, False, sign)

"""Problem instances, the change of variables ``K = R + P`` and hypothesis checks.

The Riccati equation solved here, in its deterministic-coefficient form, is::

    -dP/dt = PA + A'P + C'PC + Q - (PB + C'P)(R + P)^{-1}(B'P + PC),
    P(T) = H,   K = R + P > 0,

with gauge ``R(t) = R(0) + int_0^t F ds``. Substituting ``K = R + P`` gives a
backward equation for ``K`` whose coefficients are::

    Qtil = Q - F + C'RC + R(BC - A) + (C'B' - A')R
    Atil = A - BC
    Rtil = RB + C'R + G
"""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import matops
from .errors import ModeMismatch
from .paths import Coefficient, MatPath, TimeGrid, as_coefficient, interleave

COEFF_BOUND = 1e3
ASSUMPTION_TOL = 1e-9


@dataclass(frozen=True)
class CoefficientSet:
    A: Coefficient
    B: Coefficient
    C: Coefficient
    Q: Coefficient

    def __post_init__(self):
        for name in "ABCQ":
            object.__setattr__(self, name, as_coefficient(getattr(self, name)))
        dims = {getattr(self, name).n for name in "ABCQ"}
        if len(dims) != 1:
            raise ValueError(f"coefficient dimensions disagree: {sorted(dims)}")

    @property
    def n(self):
        return self.A.n

    def validate(self, grid, coeff_bound=COEFF_BOUND):
        for name in "ABCQ":
            coef = getattr(self, name)
            coef.check_grid(grid)
            vals = coef.on_grid(grid)
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"coefficient {name} has non-finite entries")
            if np.max(np.abs(vals)) > coeff_bound:
                raise ValueError(f"coefficient {name} exceeds bound {coeff_bound:g}")
        if matops.symmetry_defect(self.Q.on_grid(grid)) > matops.SYM_TOL * (
                1 + np.max(np.abs(self.Q.on_grid(grid)))):
            raise ValueError("coefficient Q is not symmetric")


@dataclass(frozen=True)
class GaugeSpec:
    """Gauge process ``R(t) = R0 + int F ds + int G dW``.

    In ``deterministic`` mode ``G`` must vanish. ``pathwise`` gauges are
    realised along a Brownian path by :func:`isre.stochastic.generate_gauge`.
    """

    R0: np.ndarray
    F: Coefficient
    G: Coefficient
    mode: Literal["deterministic", "pathwise"] = "deterministic"

    def __post_init__(self):
        r0 = np.atleast_2d(np.asarray(self.R0, dtype=float))
        object.__setattr__(self, "R0", r0)
        object.__setattr__(self, "F", as_coefficient(self.F))
        object.__setattr__(self, "G", as_coefficient(self.G))
        if self.mode not in ("deterministic", "pathwise"):
            raise ValueError(f"unknown gauge mode {self.mode!r}")
        if self.mode == "deterministic" and (self.G.is_table or np.any(self.G.value != 0)):
            raise ValueError("a deterministic gauge has no martingale part: G must be zero")

    @classmethod
    def constant(cls, R0):
        r0 = np.atleast_2d(np.asarray(R0, dtype=float))
        z = np.zeros_like(r0)
        return cls(r0, z, z)

    @classmethod
    def ramp(cls, R0, F):
        r0 = np.atleast_2d(np.asarray(R0, dtype=float))
        return cls(r0, F, np.zeros_like(r0))


@dataclass(frozen=True)
class SREProblem:
    coeffs: CoefficientSet
    gauge: GaugeSpec
    H: np.ndarray
    T: float
    grid_steps: int

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.H, dtype=float))
        object.__setattr__(self, "H", h)
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.grid_steps < 2:
            raise ValueError("grid_steps must be at least 2")
        if matops.symmetry_defect(h) > matops.SYM_TOL * (1 + np.max(np.abs(h))):
            raise ValueError("terminal weight H must be symmetric")
        n = self.coeffs.n
        if h.shape != (n, n) or self.gauge.R0.shape != (n, n):
            raise ValueError("H, R0 and the coefficients must share one dimension n")

    @property
    def n(self):
        return self.coeffs.n

    @property
    def grid(self):
        return TimeGrid(self.T, self.grid_steps)

    def with_grid_steps(self, N):
        return SREProblem(self.coeffs, self.gauge, self.H, self.T, N)


@dataclass
class CheckReport:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    message: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "metrics": {k: _jsonable(v) for k, v in self.metrics.items()},
            "tolerances": dict(self.tolerances),
            "message": self.message,
        }


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _gauge_half_values(gauge, grid):
    """R on nodes and midpoints.

    R is the exact integral of the piecewise-linear interpolant of F, which
    is trapezoidal quadrature at the nodes.
    """
    F = gauge.F.on_grid(grid)
    dt = grid.dt
    nodes = np.empty_like(F)
    nodes[0] = gauge.R0
    nodes[1:] = gauge.R0 + np.cumsum(0.5 * dt * (F[:-1] + F[1:]), axis=0)
    mids = nodes[:-1] + dt / 8.0 * (3.0 * F[:-1] + F[1:])
    return matops.symmetrize(interleave(nodes, mids))


def build_gauge_path(gauge, grid):
    if gauge.mode != "deterministic":
        raise ModeMismatch("pathwise gauges are generated along a Brownian path, "
                           "see isre.stochastic.generate_gauge")
    gauge.F.check_grid(grid)
    return MatPath(grid, _gauge_half_values(gauge, grid)[::2])


@dataclass
class TransformedProblem:
    """Coefficients of the K-equation sampled on nodes and midpoints."""

    grid: TimeGrid
    R_half: np.ndarray
    Qtil_half: np.ndarray
    Atil_half: np.ndarray
    Rtil_half: np.ndarray
    B_half: np.ndarray
    K_T: np.ndarray
    X_T: np.ndarray | None

    @property
    def n(self):
        return self.K_T.shape[0]

    @property
    def R(self):
        return MatPath(self.grid, self.R_half[::2])

    @property
    def Qtil(self):
        return self.Qtil_half[::2]

    @property
    def Atil(self):
        return self.Atil_half[::2]

    @property
    def Rtil(self):
        return self.Rtil_half[::2]


def transform(p, r_path=None):
    """Evaluate ``Qtil``, ``Atil``, ``Rtil`` and the terminal data on the grid.

    ``r_path`` overrides the gauge with an externally realised path (for
    instance one produced by the pathwise generator); its midpoints are then
    linear interpolants.
    """
    grid = p.grid
    c = p.coeffs
    for coef in (c.A, c.B, c.C, c.Q, p.gauge.F, p.gauge.G):
        coef.check_grid(grid)
    if r_path is None:
        R = _gauge_half_values(p.gauge, grid)
    else:
        v = r_path.values
        R = interleave(v, 0.5 * (v[:-1] + v[1:]))
    A, B, C, Q = (x.on_half_grid(grid) for x in (c.A, c.B, c.C, c.Q))
    F = p.gauge.F.on_half_grid(grid)
    G = p.gauge.G.on_half_grid(grid)
    Ct = np.swapaxes(C, -1, -2)
    At = np.swapaxes(A, -1, -2)
    Bt = np.swapaxes(B, -1, -2)
    BC = B @ C
    qtil = Q - F + Ct @ R @ C + R @ (BC - A) + (Ct @ Bt - At) @ R
    atil = A - BC
    rtil = R @ B + Ct @ R + G
    K_T = matops.symmetrize(R[-1] + p.H)
    X_T = matops.inv_pd(K_T) if matops.min_eig(K_T) > 1e-12 else None
    return TransformedProblem(grid, R, matops.symmetrize(qtil), atil, rtil, B, K_T, X_T)


def check_assumption_i(tp, tol=ASSUMPTION_TOL):
    """``Rtil == 0`` and ``Qtil >= 0`` on every node."""
    rtil_norm = np.linalg.norm(tp.Rtil, ord=np.inf, axis=(1, 2))
    q_min = matops.min_eig(tp.Qtil)
    worst_r = int(np.argmax(rtil_norm))
    worst_q = int(np.argmin(q_min))
    ok_r = bool(rtil_norm[worst_r] <= tol)
    ok_q = bool(q_min[worst_q] >= -tol)
    msgs = []
    if not ok_r:
        msgs.append(f"Rtil nonzero (max norm {rtil_norm[worst_r]:.3e} at node {worst_r})")
    if not ok_q:
        msgs.append(f"Qtil not PSD (min eig {q_min[worst_q]:.3e} at node {worst_q})")
    return CheckReport(
        "assumption_i",
        ok_r and ok_q,
        {
            "max_rtil_norm": float(rtil_norm[worst_r]),
            "max_rtil_node": worst_r,
            "min_eig_qtil": float(q_min[worst_q]),
            "min_eig_qtil_node": worst_q,
            "rtil_vanishes": ok_r,
            "qtil_psd": ok_q,
        },
        {"tol": tol},
        "; ".join(msgs),
    )


def check_assumption_ii(p, delta=None, r_path=None):
    """``R(T) + H > 0`` with ``(R(T) + H)^{-1} >= delta I``.

    Equivalent eigenvalue form: ``0 < min_eig`` and ``max_eig <= 1/delta``.
    With ``delta=None`` the largest admissible constant ``1/max_eig`` is used,
    which reduces the check to positive definiteness.
    """
    R_T = r_path.values[-1] if r_path is not None else build_gauge_path(p.gauge, p.grid)[-1]
    K_T = matops.symmetrize(R_T + p.H)
    lo, hi = (float(x) for x in matops.eig_extremes(K_T))
    pd = lo > 0
    if delta is None:
        delta = 1.0 / hi if hi > 0 else float("nan")
        bounded = pd
    else:
        bounded = pd and hi <= 1.0 / delta
    if not pd:
        msg = f"R(T)+H not positive definite (min eig {lo:.3e})"
    elif not bounded:
        msg = f"max eig of R(T)+H is {hi:.6g} > 1/delta = {1 / delta:.6g}"
    else:
        msg = ""
    return CheckReport(
        "assumption_ii",
        bool(bounded),
        {"min_eig_KT": lo, "max_eig_KT": hi, "delta": delta},
        {"delta": delta},
        msg,
    )

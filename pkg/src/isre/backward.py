"""Backward-in-time RK4 for matrix ODEs and the linear matrix equation.

The linear equation is the deterministic-coefficient form of

    dY = U dW - [Y Ahat + Ahat' Y + Chat' Y Chat + U Chat + Chat' U + Qhat] dt,
    Y(T) = Hhat,

where the martingale integrand ``U`` vanishes, leaving

    dY/dt = -(Y Ahat + Ahat' Y + Chat' Y Chat + Qhat).
"""

from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import BlowUpDetected
from .paths import Coefficient, HalfGridSampler, MatPath, as_coefficient

OVERFLOW_GUARD = 1e12


def rk4_step(rhs, t, y, h):
    """One classical RK4 step of size ``h`` (negative for backward)."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _escaped(y, guard):
    return not np.all(np.isfinite(y)) or np.max(np.abs(y)) > guard


def integrate_backward(rhs, terminal, grid, overflow_guard=OVERFLOW_GUARD,
                       symmetric=True, raise_on_blowup=True):
    """Integrate ``dY/dt = rhs(t, Y)`` from ``Y(T) = terminal`` down to ``t = 0``.

    Each accepted value is symmetrized when ``symmetric`` is set; the largest
    correction applied is stored on the returned path as ``sym_drift``.

    If a value leaves ``overflow_guard`` the remaining nodes are filled with
    NaN and the path records ``last_finite``. With ``raise_on_blowup`` a
    :class:`BlowUpDetected` carrying the partial path is raised instead of
    returning it.
    """
    terminal = np.atleast_2d(np.asarray(terminal, dtype=float))
    N, dt = grid.N, grid.dt
    nodes = grid.nodes
    values = np.full((N + 1,) + terminal.shape, np.nan)
    y = matops.symmetrize(terminal) if symmetric else terminal.copy()
    values[N] = y
    drift = 0.0
    last_finite = None
    for i in range(N, 0, -1):
        y_new = rk4_step(rhs, nodes[i], y, -dt)
        if _escaped(y_new, overflow_guard):
            last_finite = i
            break
        if symmetric:
            sym = matops.symmetrize(y_new)
            drift = max(drift, float(np.max(np.abs(sym - y_new))))
            y_new = sym
        values[i - 1] = y_new
        y = y_new
    path = MatPath(grid, values, symmetric=symmetric, last_finite=last_finite)
    path.sym_drift = drift
    if last_finite is not None and raise_on_blowup:
        raise BlowUpDetected(
            f"solution left the overflow guard {overflow_guard:g} below t = {nodes[last_finite]:.6g}",
            last_finite, path)
    return path


@dataclass(frozen=True)
class LinearBSDEData:
    Ahat: Coefficient
    Chat: Coefficient
    Qhat: Coefficient
    Hhat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Ahat", as_coefficient(self.Ahat))
        object.__setattr__(self, "Chat", as_coefficient(self.Chat))
        object.__setattr__(self, "Qhat", as_coefficient(self.Qhat))
        object.__setattr__(self, "Hhat", np.atleast_2d(np.asarray(self.Hhat, dtype=float)))
        dims = {self.Ahat.n, self.Chat.n, self.Qhat.n, self.Hhat.shape[0]}
        if len(dims) != 1:
            raise ValueError(f"linear equation data have mismatched dimensions {sorted(dims)}")

    @property
    def n(self):
        return self.Hhat.shape[0]


def solve_linear_bsde(data, grid, overflow_guard=OVERFLOW_GUARD):
    A = HalfGridSampler(data.Ahat.on_half_grid(grid), grid)
    C = HalfGridSampler(data.Chat.on_half_grid(grid), grid)
    Q = HalfGridSampler(data.Qhat.on_half_grid(grid), grid)

    def rhs(t, y):
        a, c = A(t), C(t)
        return -(y @ a + a.T @ y + c.T @ y @ c + Q(t))

    return integrate_backward(rhs, data.Hhat, grid, overflow_guard)


def beta_rate(Ahat, grid):
    """Uniform decay rate ``max_t max(-2 min_eig(sym Ahat(t)), 0)``."""
    a = as_coefficient(Ahat).on_grid(grid)
    lo = matops.min_eig(matops.symmetrize(a))
    return float(max(np.max(-2.0 * lo), 0.0))


@dataclass
class BoundReport:
    passed: bool
    worst_margin: float
    worst_node: int
    worst_time: float
    delta: float
    beta: float
    tol: float
    margins: np.ndarray

    def to_dict(self):
        return {
            "passed": bool(self.passed),
            "worst_margin": self.worst_margin,
            "worst_node": self.worst_node,
            "worst_time": self.worst_time,
            "delta": self.delta,
            "beta": self.beta,
            "tol": self.tol,
        }


def verify_lower_bound(path, delta, beta, tol=1e-6):
    """Check ``Y(t) >= delta exp(-beta (T - t)) I`` node by node."""
    grid = path.grid
    lo = matops.min_eig(path.values)
    margins = lo - delta * np.exp(-beta * (grid.T - grid.nodes))
    k = int(np.argmin(margins))
    return BoundReport(bool(margins[k] >= -tol), float(margins[k]), k,
                       float(grid.nodes[k]), float(delta), float(beta), tol, margins)

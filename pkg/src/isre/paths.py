"""Time grids, matrix trajectories and time-indexed coefficients."""

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i T / N`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"grid steps must be a positive integer, got {self.N}")

    @property
    def dt(self):
        return self.T / self.N

    @property
    def nodes(self):
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def half_nodes(self):
        """Nodes and midpoints, ``2N + 1`` times spaced ``dt / 2``."""
        return np.linspace(0.0, self.T, 2 * self.N + 1)

    def half_index(self, t):
        """Index into :attr:`half_nodes` if ``t`` sits on it, else ``None``."""
        x = 2.0 * t / self.dt
        k = int(round(x))
        if abs(x - k) < 1e-9 and 0 <= k <= 2 * self.N:
            return k
        return None


def interp_uniform(values, T, t):
    """Piecewise-linear interpolation of samples on a uniform grid of [0, T]."""
    m = len(values) - 1
    if m == 0:
        return values[0]
    x = min(max(t / T * m, 0.0), float(m))
    i = min(int(x), m - 1)
    w = x - i
    if w == 0.0:
        return values[i]
    return (1.0 - w) * values[i] + w * values[i + 1]


def cubic_midpoints(values):
    """Midpoint values of node samples by four-point Lagrange interpolation.

    Interior intervals use the centred stencil (-1, 9, 9, -1)/16; the two end
    intervals use one-sided four-point stencils. Falls back to linear for
    fewer than four nodes.
    """
    y = np.asarray(values, dtype=float)
    m = len(y) - 1
    if m < 3:
        return 0.5 * (y[:-1] + y[1:])
    mid = np.empty((m,) + y.shape[1:])
    mid[1:-1] = (-y[:-3] + 9.0 * y[1:-2] + 9.0 * y[2:-1] - y[3:]) / 16.0
    mid[0] = (5.0 * y[0] + 15.0 * y[1] - 5.0 * y[2] + y[3]) / 16.0
    mid[-1] = (5.0 * y[-1] + 15.0 * y[-2] - 5.0 * y[-3] + y[-4]) / 16.0
    return mid


def interleave(nodes, mids):
    out = np.empty((2 * len(mids) + 1,) + nodes.shape[1:])
    out[0::2] = nodes
    out[1::2] = mids
    return out


@dataclass
class MatPath:
    """One matrix per grid node.

    ``last_finite`` is set when the path blew up during backward integration:
    nodes ``last_finite .. N`` are valid, earlier ones are NaN.
    """

    grid: TimeGrid
    values: np.ndarray
    symmetric: bool = True
    last_finite: int | None = None
    sym_drift: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[1] != self.values.shape[2]:
            raise ValueError(f"path values must have shape (N+1, n, n), got {self.values.shape}")
        if len(self.values) != self.grid.N + 1:
            raise GridMismatch(
                f"path has {len(self.values)} nodes, grid expects {self.grid.N + 1}")

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def blown_up(self):
        return self.last_finite is not None

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def at(self, t):
        return interp_uniform(self.values, self.grid.T, t)

    def half_values(self):
        """Values at nodes and cubic-interpolated midpoints (length 2N+1)."""
        return interleave(self.values, cubic_midpoints(self.values))

    def sampler(self):
        return HalfGridSampler(self.half_values(), self.grid)


class HalfGridSampler:
    """Callable ``t -> matrix`` backed by samples on nodes and midpoints.

    Lookups that land on a sample are O(1); anything else is linearly
    interpolated between neighbouring half-grid samples.
    """

    def __init__(self, values, grid):
        self.values = np.asarray(values, dtype=float)
        self.grid = grid
        if len(self.values) != 2 * grid.N + 1:
            raise GridMismatch("half-grid table length does not match grid")

    def __call__(self, t):
        k = self.grid.half_index(t)
        if k is not None:
            return self.values[k]
        return interp_uniform(self.values, self.grid.T, t)


@dataclass(frozen=True)
class Coefficient:
    """A matrix-valued function of time: a constant or a grid table.

    Tables hold ``M + 1`` samples spread uniformly over ``[0, T]`` and are
    evaluated by piecewise-linear interpolation.
    """

    value: np.ndarray
    T: float | None = None
    is_table: bool = field(default=False)

    @classmethod
    def constant(cls, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"coefficient must be square, got shape {m.shape}")
        return cls(m)

    @classmethod
    def table(cls, samples, T):
        s = np.asarray(samples, dtype=float)
        if s.ndim != 3 or s.shape[1] != s.shape[2] or len(s) < 2:
            raise ValueError(f"table must have shape (M+1, n, n) with M >= 1, got {s.shape}")
        return cls(s, float(T), True)

    @classmethod
    def from_function(cls, f, grid):
        return cls.table(np.array([f(t) for t in grid.nodes]), grid.T)

    @property
    def n(self):
        return self.value.shape[-1]

    def __call__(self, t):
        if not self.is_table:
            return self.value
        return interp_uniform(self.value, self.T, t)

    def on_grid(self, grid):
        if not self.is_table:
            return np.broadcast_to(self.value, (grid.N + 1,) + self.value.shape).copy()
        if len(self.value) == grid.N + 1 and np.isclose(self.T, grid.T):
            return self.value.copy()
        return np.array([self(t) for t in grid.nodes])

    def on_half_grid(self, grid):
        if not self.is_table:
            return np.broadcast_to(self.value, (2 * grid.N + 1,) + self.value.shape).copy()
        return np.array([self(t) for t in grid.half_nodes])

    def check_grid(self, grid):
        if self.is_table and (len(self.value) != grid.N + 1 or not np.isclose(self.T, grid.T)):
            raise GridMismatch(
                f"table has {len(self.value)} samples on [0, {self.T}], "
                f"grid has {grid.N + 1} nodes on [0, {grid.T}]")


def as_coefficient(x):
    if isinstance(x, Coefficient):
        return x
    return Coefficient.constant(x)

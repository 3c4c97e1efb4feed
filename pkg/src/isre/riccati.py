"""Solving the Riccati equation through the inverse ``X = (R + P)^{-1}``.

When ``Rtil = 0`` the inverse satisfies (deterministic coefficients)::

    dX/dt = Atil X + X Atil' - B X B' + X Qtil X,    X(T) = (R(T) + H)^{-1}

which carries no definiteness constraint. It is solved by the monotone
iteration

    dX_{n+1}/dt = Atil X_{n+1} + X_{n+1} Atil' - B X_{n+1} B'
                  + X_{n+1} Qtil X_n + X_n Qtil X_{n+1} - X_n Qtil X_n

started from ``X_0 = 0``; each step is a linear backward ODE. The Riccati
solution is then ``P = X^{-1} - R``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import matops
from ._kernels import picard_rk4
from .backward import OVERFLOW_GUARD, BoundReport, integrate_backward, rk4_step, verify_lower_bound
from .errors import (AssumptionViolation, BlowUpDetected, LostPositivity, NoConvergence,
                     NotPositiveDefinite)
from .paths import HalfGridSampler, MatPath
from .problem import (ASSUMPTION_TOL, CheckReport, check_assumption_i, check_assumption_ii,
                      transform)

PICARD_TOL = 1e-10
MAX_ITER = 200


@dataclass
class IterationReport:
    iterations: int = 0
    sup_diff_per_iter: list = field(default_factory=list)
    monotonicity_margin_per_iter: list = field(default_factory=list)
    min_eig_per_iter: list = field(default_factory=list)
    converged: bool = False
    picard_tol: float = PICARD_TOL

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "picard_tol": self.picard_tol,
            "sup_diff_per_iter": list(self.sup_diff_per_iter),
            "monotonicity_margin_per_iter": list(self.monotonicity_margin_per_iter),
            "min_eig_per_iter": list(self.min_eig_per_iter),
        }


@dataclass
class SolveReport:
    sre_residual_max: float = float("nan")
    terminal_exact: bool = False
    inverse_identity_max: float = float("nan")
    min_eig_K_over_time: np.ndarray | None = None
    lower_bound: BoundReport | None = None
    beta0: float = float("nan")
    assumption_reports: list = field(default_factory=list)
    iteration: IterationReport | None = None

    @property
    def lower_bound_margin(self):
        return self.lower_bound.worst_margin if self.lower_bound else float("nan")


@dataclass
class SRESolution:
    Ppath: MatPath
    Kpath: MatPath
    Xpath: MatPath
    Lambda_path: MatPath
    Rpath: MatPath
    diagnostics: SolveReport = field(default_factory=SolveReport)
    K_independent: MatPath | None = None


def _samplers(tp):
    g = tp.grid
    return (HalfGridSampler(tp.Atil_half, g), HalfGridSampler(tp.B_half, g),
            HalfGridSampler(tp.Qtil_half, g))


def picard_step(X_prev, tp, grid=None, overflow_guard=OVERFLOW_GUARD, engine="compiled"):
    """One linear backward solve of the monotone iteration.

    ``X_prev`` is read at RK4 midpoints through four-point interpolation of
    its node values, which keeps the fixed point fourth-order accurate.
    ``engine="numpy"`` runs the same scheme through the generic integrator.
    """
    grid = grid or tp.grid
    if tp.X_T is None:
        raise NotPositiveDefinite("terminal R(T) + H is not positive definite; "
                                  "the inverse equation has no terminal value", node=grid.N)
    if engine == "compiled":
        values, last, drift = picard_rk4(
            np.ascontiguousarray(tp.Atil_half), np.ascontiguousarray(tp.B_half),
            np.ascontiguousarray(tp.Qtil_half), np.ascontiguousarray(X_prev.half_values()),
            np.ascontiguousarray(tp.X_T), grid.dt, overflow_guard)
        path = MatPath(grid, values, last_finite=None if last < 0 else int(last),
                       sym_drift=float(drift))
        if path.blown_up:
            raise BlowUpDetected(
                f"Picard iterate left the overflow guard below t = {grid.nodes[last]:.6g}",
                int(last), path)
        return path

    A, B, Q = _samplers(tp)
    Xp = X_prev.sampler()

    def rhs(t, x):
        a, b, q, xp = A(t), B(t), Q(t), Xp(t)
        xq = x @ q @ xp
        return a @ x + x @ a.T - b @ x @ b.T + xq + xq.T - xp @ q @ xp

    return integrate_backward(rhs, tp.X_T, grid, overflow_guard)


def _zero_path(grid, n):
    return MatPath(grid, np.zeros((grid.N + 1, n, n)))


def solve_inverse_equation(tp, grid=None, picard_tol=PICARD_TOL, max_iter=MAX_ITER,
                           overflow_guard=OVERFLOW_GUARD, keep_iterates=False):
    """Iterate :func:`picard_step` from ``X_0 = 0`` to a fixed point.

    Returns ``(X, report)``; with ``keep_iterates`` the report also carries
    the list of all iterates as ``report.iterates``.
    """
    grid = grid or tp.grid
    report = IterationReport(picard_tol=picard_tol)
    x = _zero_path(grid, tp.n)
    iterates = [x] if keep_iterates else None
    while report.iterations < max_iter:
        try:
            x_new = picard_step(x, tp, grid, overflow_guard)
        except BlowUpDetected as exc:
            exc.report = report
            raise
        report.iterations += 1
        diff = x.values - x_new.values
        report.sup_diff_per_iter.append(float(np.max(np.linalg.norm(diff, axis=(1, 2)))))
        report.monotonicity_margin_per_iter.append(float(np.min(matops.min_eig(diff))))
        report.min_eig_per_iter.append(float(np.min(matops.min_eig(x_new.values))))
        x = x_new
        if keep_iterates:
            iterates.append(x)
        if report.sup_diff_per_iter[-1] <= picard_tol:
            report.converged = True
            break
    if keep_iterates:
        report.iterates = iterates
    if not report.converged:
        raise NoConvergence(
            f"no convergence in {max_iter} iterations "
            f"(last sup difference {report.sup_diff_per_iter[-1]:.3e})", report)
    lo = matops.min_eig(x.values)
    k = int(np.argmin(lo))
    if lo[k] <= 0:
        raise LostPositivity(f"X lost positive definiteness at node {k} (min eig {lo[k]:.3e})",
                             node=k, min_eig=float(lo[k]), report=report)
    return x, report


def _batched_inv_pd(values, what):
    lo = matops.min_eig(values)
    bad = np.nonzero(lo <= 1e-12)[0]
    if len(bad):
        k = int(bad[-1])
        raise NotPositiveDefinite(f"{what} is not positive definite at node {k} "
                                  f"(min eig {lo[k]:.3e})", node=k, min_eig=float(lo[k]))
    return matops.symmetrize(np.linalg.inv(values))


def recover_solution(Xpath, p, tp):
    """``K = X^{-1}``, ``P = K - R``, ``Lambda = 0`` on every node.

    The terminal node is pinned to the data: ``P(T) = H`` and ``K(T) = R(T) + H``.
    """
    grid = Xpath.grid
    K = _batched_inv_pd(Xpath.values, "X")
    K[-1] = tp.K_T
    R = tp.R.values
    P = K - R
    P[-1] = p.H
    zeros = np.zeros_like(P)
    sol = SRESolution(MatPath(grid, P), MatPath(grid, K), Xpath, MatPath(grid, zeros),
                      MatPath(grid, R))
    sol.diagnostics.min_eig_K_over_time = matops.min_eig(K)
    return sol


def solve_k_equation(Xpath, tp, grid=None, overflow_guard=OVERFLOW_GUARD):
    """Backward solve of ``dK/dt = -(K Atil + Atil' K + Qtil) + K B X B' K``.

    ``X`` enters as a known coefficient; no inversion of ``X`` is performed.
    """
    grid = grid or tp.grid
    A, B, Q = _samplers(tp)
    X = Xpath.sampler()

    def rhs(t, k):
        a, b = A(t), B(t)
        kb = k @ b
        return -(k @ a + a.T @ k + Q(t)) + kb @ X(t) @ kb.T

    return integrate_backward(rhs, tp.K_T, grid, overflow_guard)


def check_inverse_identity(Kpath, Xpath):
    n = Kpath.n
    prod = Kpath.values @ Xpath.values - np.eye(n)
    return float(np.max(np.linalg.norm(prod, axis=(1, 2))))


def riccati_drift(P, R, A, B, C, Q):
    """``dP/dt`` of the deterministic Riccati equation; batched over nodes."""
    At, Ct = np.swapaxes(A, -1, -2), np.swapaxes(C, -1, -2)
    K = R + P
    L = P @ B + Ct @ P
    M = np.swapaxes(B, -1, -2) @ P + P @ C
    return -(P @ A + At @ P + Ct @ P @ C + Q) + L @ np.linalg.solve(K, M)


def _fd_derivative(values, dt):
    d = np.empty_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2.0 * dt)
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
    d[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dt)
    return d


def sre_residual(sol, p, grid=None):
    """Max Frobenius norm of ``dP/dt - drift(P)`` over the grid.

    ``dP/dt`` comes from second-order finite differences, so the residual of
    an exact solution is O(dt^2), not zero.
    """
    grid = grid or sol.Ppath.grid
    P, R = sol.Ppath.values, sol.Rpath.values
    lo = matops.min_eig(matops.symmetrize(R + P))
    if np.any(lo <= 0):
        k = int(np.nonzero(lo <= 0)[0][-1])
        raise NotPositiveDefinite(f"K = R + P lost definiteness at node {k}", node=k,
                                  min_eig=float(lo[k]))
    c = p.coeffs
    A, B, C, Q = (x.on_grid(grid) for x in (c.A, c.B, c.C, c.Q))
    res = _fd_derivative(P, grid.dt) - riccati_drift(P, R, A, B, C, Q)
    return float(np.max(np.linalg.norm(res, axis=(1, 2))))


def terminal_defect(sol, p):
    return float(np.max(np.abs(sol.Ppath.values[-1] - p.H)))


def solve_p_direct(p, grid=None, overflow_guard=OVERFLOW_GUARD, pd_tol=1e-12):
    """Integrate the Riccati equation for ``P`` directly, inverting ``R + P`` per stage.

    Raises :class:`NotPositiveDefinite` with the node where ``R + P`` stopped
    being positive definite.
    """
    grid = grid or p.grid
    tp = transform(p)
    c = p.coeffs
    A, B, C, Q = (HalfGridSampler(x.on_half_grid(grid), grid) for x in (c.A, c.B, c.C, c.Q))
    R = HalfGridSampler(tp.R_half, grid)
    if matops.min_eig(tp.K_T) <= pd_tol:
        raise NotPositiveDefinite("R(T) + H is not positive definite", node=grid.N,
                                  min_eig=matops.min_eig(tp.K_T))

    def rhs(t, P):
        K = matops.symmetrize(R(t) + P)
        lo = np.linalg.eigvalsh(K)[0]
        if lo <= pd_tol:
            err = NotPositiveDefinite(f"R + P lost definiteness near t = {t:.6g}", min_eig=lo)
            err.time = t
            raise err
        return riccati_drift(P, R(t), A(t), B(t), C(t), Q(t))

    try:
        return integrate_backward(rhs, p.H, grid, overflow_guard)
    except NotPositiveDefinite as exc:
        exc.node = int(np.ceil(exc.time / grid.dt - 1e-9))
        raise


@dataclass
class ExplosionResult:
    path: MatPath
    blow_up_time: float | None

    @property
    def blown_up(self):
        return self.blow_up_time is not None


def explosion_probe(Qtil, X_T, grid, overflow_guard=OVERFLOW_GUARD, halvings=20):
    """Backward solve of ``dX/dt = X Qtil X - X X X`` until it leaves the guard.

    The blow-up time is refined by bisecting the size of the last step: it is
    the earliest time reachable from the last finite node with a single RK4
    step that stays inside the guard.
    """
    Qtil = np.atleast_2d(np.asarray(Qtil, dtype=float))
    X_T = np.atleast_2d(np.asarray(X_T, dtype=float))

    def rhs(t, x):
        return x @ Qtil @ x - x @ x @ x

    path = integrate_backward(rhs, X_T, grid, overflow_guard, raise_on_blowup=False)
    if path.last_finite is None:
        return ExplosionResult(path, None)
    i = path.last_finite
    t_i, x_i = grid.nodes[i], path.values[i]
    lo, hi = 0.0, grid.dt
    for _ in range(halvings):
        mid = 0.5 * (lo + hi)
        y = rk4_step(rhs, t_i, x_i, -mid)
        if np.all(np.isfinite(y)) and np.max(np.abs(y)) <= overflow_guard:
            lo = mid
        else:
            hi = mid
    return ExplosionResult(path, float(t_i - lo))


def beta0_rate(tp, Xpath):
    """A posteriori rate ``max_t max(max_eig(sym(2 Atil + X Qtil)), 0)``.

    This is the decay rate of the linear equation obtained by freezing one
    factor of the quadratic term at the converged ``X``.
    """
    M = 2.0 * tp.Atil + Xpath.values @ tp.Qtil
    hi = matops.max_eig(matops.symmetrize(M))
    return float(max(np.max(hi), 0.0))


@dataclass
class SolveOptions:
    picard_tol: float = PICARD_TOL
    max_iter: int = MAX_ITER
    overflow_guard: float = OVERFLOW_GUARD
    override_checks: bool = False
    assumption_tol: float = ASSUMPTION_TOL
    delta: float | None = None
    residual_tol: float = 1e-3
    identity_tol: float = 1e-5
    bound_tol: float = 1e-6

    def to_dict(self):
        return dict(self.__dict__)


def solve_sre(p, options=None):
    """Full pipeline: checks, inverse equation, recovery and verification.

    Raises :class:`AssumptionViolation` when a hypothesis fails and
    ``override_checks`` is off; solver failures propagate as their own
    exception types.
    """
    opts = options or SolveOptions()
    tp = transform(p)
    rep_i = check_assumption_i(tp, opts.assumption_tol)
    rep_ii = check_assumption_ii(p, opts.delta, tp.R)
    reports = [rep_i, rep_ii]
    failed = [r for r in reports if not r.passed]
    if failed and not opts.override_checks:
        names = {"assumption_i": "assumption (i)", "assumption_ii": "assumption (ii)"}
        raise AssumptionViolation(
            "; ".join(f"{names[r.name]} failed: {r.message}" for r in failed), reports)
    if tp.X_T is None:
        raise AssumptionViolation("assumption (ii) failed: R(T)+H is not positive definite, "
                                  "the inverse equation has no terminal value", reports)

    X, it_report = solve_inverse_equation(tp, picard_tol=opts.picard_tol,
                                          max_iter=opts.max_iter,
                                          overflow_guard=opts.overflow_guard)
    sol = recover_solution(X, p, tp)
    K_ind = solve_k_equation(X, tp, overflow_guard=opts.overflow_guard)
    sol.K_independent = K_ind

    d = sol.diagnostics
    d.assumption_reports = reports
    d.iteration = it_report
    d.inverse_identity_max = check_inverse_identity(K_ind, X)
    d.sre_residual_max = sre_residual(sol, p)
    d.terminal_exact = terminal_defect(sol, p) == 0.0
    d.beta0 = beta0_rate(tp, X)
    delta = opts.delta if opts.delta is not None else matops.min_eig(tp.X_T)
    d.lower_bound = verify_lower_bound(X, delta, d.beta0, opts.bound_tol)
    return sol


def solution_checks(sol, opts):
    """Pass/fail entries for the verifiable guarantees of a completed solve."""
    d = sol.diagnostics
    min_k = float(np.min(d.min_eig_K_over_time))
    return [
        CheckReport("sre_residual", d.sre_residual_max <= opts.residual_tol,
                    {"max": d.sre_residual_max}, {"tol": opts.residual_tol}),
        CheckReport("terminal_condition", d.terminal_exact,
                    {"exact": d.terminal_exact}, {"tol": 0.0}),
        CheckReport("inverse_identity", d.inverse_identity_max <= opts.identity_tol,
                    {"max": d.inverse_identity_max}, {"tol": opts.identity_tol}),
        CheckReport("positivity", min_k > 0, {"min_eig_K": min_k}, {"tol": 0.0}),
        CheckReport("lower_bound", d.lower_bound.passed, d.lower_bound.to_dict(),
                    {"tol": opts.bound_tol}),
    ]


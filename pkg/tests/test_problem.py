import numpy as np
import pytest

from isre import matops
from isre.errors import ModeMismatch
from isre.paths import Coefficient, TimeGrid
from isre.problem import (CoefficientSet, GaugeSpec, SREProblem, build_gauge_path,
                          check_assumption_i, check_assumption_ii, transform)

Z1 = np.zeros((1, 1))


def problem(A=0.0, B=0.0, C=0.0, Q=0.0, H=1.0, R0=0.0, F=0.0, T=1.0, N=10):
    """Scalars are read as multiples of the identity in the dimension of H."""
    n = np.atleast_2d(H).shape[0]

    def m(v):
        if isinstance(v, Coefficient):
            return v
        return v * np.eye(n) if np.ndim(v) == 0 else np.atleast_2d(np.asarray(v, dtype=float))

    return SREProblem(CoefficientSet(m(A), m(B), m(C), m(Q)),
                      GaugeSpec(m(R0), m(F), np.zeros((n, n))), m(H), T, N)


def test_gauge_constant_and_ramp():
    g = TimeGrid(1.0, 10)
    r = build_gauge_path(GaugeSpec.constant(np.diag([1.0, -1.0])), g)
    np.testing.assert_array_equal(r.values, np.broadcast_to(np.diag([1.0, -1.0]), (11, 2, 2)))
    r = build_gauge_path(GaugeSpec.ramp([[0.0]], [[2.0]]), g)
    assert r.values[-1, 0, 0] == pytest.approx(2.0, abs=1e-14)


def test_gauge_time_dependent_drift():
    g = TimeGrid(1.0, 100)
    F = Coefficient.table(g.nodes[:, None, None], 1.0)
    r = build_gauge_path(GaugeSpec.ramp([[1.0]], F), g)
    assert abs(r.values[-1, 0, 0] - 1.5) <= 1e-3


def test_pathwise_gauge_rejected():
    g = GaugeSpec([[1.0]], Z1, [[0.5]], mode="pathwise")
    with pytest.raises(ModeMismatch):
        build_gauge_path(g, TimeGrid(1.0, 4))


def test_deterministic_gauge_requires_zero_G():
    with pytest.raises(ValueError):
        GaugeSpec([[1.0]], Z1, [[0.5]])


def test_problem_validation():
    with pytest.raises(ValueError):
        problem(T=0.0)
    with pytest.raises(ValueError):
        problem(N=1)
    with pytest.raises(ValueError):
        problem(H=np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_transform_rtil_cancellation():
    tp = transform(problem(B=0.5, C=-0.5, R0=2.0))
    np.testing.assert_allclose(tp.Rtil, 0.0, atol=1e-15)


def test_transform_qtil_hand_value():
    tp = transform(problem(A=1.0, R0=-1.0))
    np.testing.assert_allclose(tp.Qtil[:, 0, 0], 2.0)


def test_transform_vanishing_coupling():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((2, 2))
    Q = matops.symmetrize(rng.standard_normal((2, 2)))
    z = np.zeros((2, 2))
    tp = transform(problem(A=A, B=z, C=z, Q=Q, H=np.eye(2), R0=z, F=z))
    np.testing.assert_allclose(tp.Qtil, np.broadcast_to(Q, tp.Qtil.shape), atol=1e-15)
    np.testing.assert_allclose(tp.Atil, np.broadcast_to(A, tp.Atil.shape))
    np.testing.assert_array_equal(tp.Rtil, 0.0)


def test_transform_drift_enters_with_minus_sign():
    # A = B = C = Q = 0, R = t F: K = R + P must have dK/dt = 0 when P = H - (T - t) F,
    # i.e. dK/dt = -Qtil with Qtil = -F.
    tp = transform(problem(F=0.7))
    np.testing.assert_allclose(tp.Qtil[:, 0, 0], -0.7)


def test_transform_linear_in_Q():
    rng = np.random.default_rng(4)
    A, B, C = (rng.standard_normal((2, 2)) for _ in range(3))
    R0 = matops.symmetrize(rng.standard_normal((2, 2)))
    F = matops.symmetrize(rng.standard_normal((2, 2)))
    dQ = matops.symmetrize(rng.standard_normal((2, 2)))
    base = transform(problem(A=A, B=B, C=C, Q=np.eye(2), H=3 * np.eye(2), R0=R0, F=F))
    shift = transform(problem(A=A, B=B, C=C, Q=np.eye(2) + dQ, H=3 * np.eye(2), R0=R0, F=F))
    np.testing.assert_allclose(shift.Qtil - base.Qtil, np.broadcast_to(dQ, base.Qtil.shape),
                               atol=1e-13)


def test_transform_matches_constant_formula():
    rng = np.random.default_rng(5)
    A, B, C = (rng.standard_normal((2, 2)) for _ in range(3))
    R = matops.symmetrize(rng.standard_normal((2, 2)))
    Q = 5 * np.eye(2)
    tp = transform(problem(A=A, B=B, C=C, Q=Q, H=np.eye(2) * 4, R0=R))
    expected = Q + C.T @ R @ C + R @ (B @ C - A) + (C.T @ B.T - A.T) @ R
    np.testing.assert_allclose(tp.Qtil[3], matops.symmetrize(expected), atol=1e-13)
    np.testing.assert_allclose(tp.Atil[3], A - B @ C)
    np.testing.assert_allclose(tp.Rtil[3], R @ B + C.T @ R, atol=1e-14)


def test_terminal_data():
    tp = transform(problem(H=3.0, R0=1.0))
    assert tp.K_T[0, 0] == 4.0
    assert tp.X_T[0, 0] == pytest.approx(0.25)
    assert transform(problem(H=0.5, R0=-1.0)).X_T is None


def test_assumption_i_examples():
    rng = np.random.default_rng(6)
    R = matops.symmetrize(rng.standard_normal((2, 2)))
    z = np.zeros((2, 2))
    assert check_assumption_i(transform(problem(B=z, C=z, Q=10 * np.eye(2), H=10 * np.eye(2),
                                                R0=R))).passed
    rep = check_assumption_i(transform(problem(B=1.0, Q=1.0, R0=1.0)))
    assert not rep.passed
    assert rep.metrics["max_rtil_norm"] == pytest.approx(1.0)
    R = np.diag([1.0, -1.0])
    B = np.diag([0.3, -0.7])
    C = (-R @ B @ np.linalg.inv(R)).T
    rep = check_assumption_i(transform(problem(B=B, C=C, Q=np.eye(2), H=2 * np.eye(2), R0=R)))
    assert rep.metrics["max_rtil_norm"] <= 1e-15
    assert rep.passed


def test_assumption_ii_examples():
    assert check_assumption_ii(problem(H=np.eye(2), R0=np.zeros((2, 2))), 0.5).passed
    assert not check_assumption_ii(problem(H=np.diag([1.0, -0.1]), R0=np.zeros((2, 2))),
                                   0.5).passed
    rep = check_assumption_ii(problem(H=np.diag([4.0, 1.0]), R0=np.zeros((2, 2))), 0.5)
    assert not rep.passed
    assert rep.metrics["max_eig_KT"] == pytest.approx(4.0)


@pytest.mark.parametrize("seed", range(20))
def test_assumption_ii_matches_explicit_inverse(seed):
    rng = np.random.default_rng(seed)
    H = matops.symmetrize(rng.standard_normal((2, 2))) + 1.2 * np.eye(2)
    delta = rng.uniform(0.1, 1.0)
    rep = check_assumption_ii(problem(H=H, R0=np.zeros((2, 2))), delta)
    expected = matops.is_pd(H, 0.0) and matops.min_eig(np.linalg.inv(H)) >= delta
    assert rep.passed == expected


def test_default_delta_reduces_to_positive_definiteness():
    assert check_assumption_ii(problem(H=np.diag([3.5, 1.0]), R0=np.zeros((2, 2)))).passed

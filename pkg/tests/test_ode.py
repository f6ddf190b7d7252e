import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from liesys import models
from liesys.errors import SolverError
from liesys.geometry import TWO_PI, Chart, VectorField
from liesys.ode import (
    RK4,
    Adaptive,
    ControlSignal,
    TDepVectorField,
    Trajectory,
    integrate,
    quadrature,
    unwrap_angles,
    wrap_angles,
)

C = ControlSignal.constant
T0 = models.load("trailer0")

# tight DOP853 runs from tests/oracles/generate.py
TRAILER0_AT_5 = [0.3048345191105811, 1.743018166107563, 5.916337814536777]
GAMBIER_LOG_X_AT_5 = 2.3184731190650627
HOPF_R_AT_2 = 0.07789843079367442  # (1 + 3 e^4)^(-1/2)


def radial(a: float = -1.0) -> TDepVectorField:
    c = Chart(("r",))
    (r,) = c.vars()
    return TDepVectorField([(C(a), VectorField(c, [r])), (C(1.0), VectorField(c, [r**3]))])


def test_trailer0_turning_in_place():
    X = T0.system({"b1": C(1.0), "b2": C(0.0)})
    tr = integrate(X, [1.0, 0.0, 0.0], 0.0, 1.0, RK4())
    np.testing.assert_allclose(tr.final, [1.0, 0.0, 1.0], atol=1e-12)


def test_trailer0_straight_line():
    X = T0.system({"b1": C(0.0), "b2": C(1.0)})
    tr = integrate(X, [0.0, 0.0, 0.0], 0.0, 1.0, RK4())
    np.testing.assert_allclose(tr.final, [1.0, 0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("method", [RK4(1e-3), Adaptive()])
def test_hopf_radial_against_closed_form(method):
    tr = integrate(radial(), [0.5], 0.0, 2.0, method)
    assert abs(tr.final[0] - HOPF_R_AT_2) <= 1e-8


def test_rk4_order():
    X = T0.system()
    errs = []
    for h in (0.05, 0.025):
        tr = integrate(X, [0.5, -0.3, 0.2], 0.0, 5.0, RK4(h))
        errs.append(np.max(np.abs(tr.final - TRAILER0_AT_5)))
    assert 12.0 <= errs[0] / errs[1] <= 20.0


def test_adaptive_against_fine_reference():
    rtol = 1e-8
    tr = integrate(T0.system(), [0.5, -0.3, 0.2], 0.0, 5.0, Adaptive(rtol=rtol))
    fine = integrate(T0.system(), [0.5, -0.3, 0.2], 0.0, 5.0, RK4(5e-4))
    assert np.max(np.abs(tr.final - fine.final)) <= 10 * rtol
    assert np.max(np.abs(tr.final - TRAILER0_AT_5)) <= 10 * rtol


def test_rk4_grid():
    tr = integrate(T0.system(), [0.5, -0.3, 0.2], 0.0, 5.0, RK4(1e-3))
    assert len(tr) == 5001
    assert tr.times[0] == 0.0 and tr.times[-1] == 5.0
    np.testing.assert_allclose(np.diff(tr.times), 1e-3, rtol=1e-9)


def test_quadrature_examples():
    assert quadrature(lambda t: np.ones_like(t), 0.0, 2.0).final[0] == pytest.approx(2.0, abs=1e-14)
    assert abs(quadrature(np.cos, 0.0, math.pi / 2).final[0] - 1.0) <= 1e-10


def test_quadrature_of_gambier_fiber_speed():
    g = models.load("gambier(1)")
    X = g.system()
    red = integrate(X, [0.0, 0.2], 0.0, 5.0, RK4())
    y = red.column("y")
    n = g.params["n"]
    tr = red
    q = quadrature(lambda t: n * tr.at(t)[:, 1], 0.0, 5.0, tr.times)
    assert abs(q.final[0] - GAMBIER_LOG_X_AT_5) <= 1e-6
    # the log coordinate integrates the same quantity directly
    assert abs(red.column("s")[-1] - GAMBIER_LOG_X_AT_5) <= 1e-6
    assert y.shape == (5001,)


def test_hermite_dense_output():
    tr = integrate(radial(), [0.5], 0.0, 2.0, Adaptive(rtol=1e-10, atol=1e-12))
    fine = integrate(radial(), [0.5], 0.0, 2.0, RK4(1e-3))
    mid = fine.times[::7]
    assert np.max(np.abs(tr.at(mid)[:, 0] - fine.states[::7, 0])) <= 1e-7


@given(st.lists(st.floats(-50.0, 50.0), min_size=2, max_size=40))
def test_wrap_unwrap_round_trip(steps):
    c = Chart(("a", "b"), periodic=frozenset({"a"}))
    # a continuous path: increments below pi
    incr = np.clip(np.diff(np.asarray(steps)) * 0.05, -3.0, 3.0)
    a = np.concatenate([[steps[0]], steps[0] + np.cumsum(incr)])
    states = np.column_stack([a, a])
    w = wrap_angles(states, c)
    assert np.all((w[:, 0] >= 0) & (w[:, 0] < TWO_PI))
    np.testing.assert_array_equal(w[:, 1], a)
    back = unwrap_angles(w, c)
    shift = back[0, 0] - a[0]
    assert abs(shift / TWO_PI - round(shift / TWO_PI)) <= 1e-12
    assert np.max(np.abs(back[:, 0] - shift - a)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


def test_blow_up_is_a_solver_error():
    c = Chart(("r",))
    (r,) = c.vars()
    X = TDepVectorField([(C(1.0), VectorField(c, [r**3]))])
    with pytest.raises(SolverError):
        integrate(X, [2.0], 0.0, 1.0, RK4(1e-2))
    with pytest.raises(SolverError):
        integrate(X, [2.0], 0.0, 1.0, Adaptive())


def test_control_signals():
    s = ControlSignal.sinusoid(2.0, 3.0, 0.5, 1.0)
    assert s(0.2) == pytest.approx(1.0 + 2.0 * math.sin(0.6 + 0.5))
    p = ControlSignal.polynomial([1.0, 2.0, 3.0])
    assert p(2.0) == 17.0
    np.testing.assert_array_equal(C(4.0)(np.zeros(3)), [4.0, 4.0, 4.0])
    for sig in (s, p, C(1.5)):
        assert ControlSignal.from_dict(sig.to_dict()) == sig
    with pytest.raises(ValueError):
        ControlSignal.from_dict({"kind": "constant", "value": 1.0, "extra": 2})
    with pytest.raises(ValueError):
        ControlSignal.from_dict({"kind": "square"})


def test_trajectory_requires_increasing_times():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 1)), Chart(("r",)))


def test_interval_must_be_forward():
    with pytest.raises(ValueError):
        integrate(radial(), [0.5], 1.0, 0.0)

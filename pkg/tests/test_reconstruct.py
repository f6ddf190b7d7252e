import math

import numpy as np
import pytest

from liesys import models
from liesys.errors import ConnectionCheckError, ProjectabilityError, TooFewNodesError
from liesys.geometry import Chart, VectorField
from liesys.ode import RK4, Adaptive, ControlSignal, TDepVectorField, Trajectory, integrate, unwrap_angles
from liesys.principal import Connection1D, FiberAction
from liesys.reconstruct import reconstruct, residual_sup

C = ControlSignal.constant

# tight DOP853 runs from tests/oracles/generate.py, default controls, t = 5
FINAL = {
    "trailer0": [0.3048345191105811, 1.743018166107563, 5.916337814536777],
    "trailer1": [1.188217968867452, 0.9744616289465035, 2.323342356605047, 6.316337814536776],
    "gambier(1)": [math.log(10.160149118547924), -0.088566828684632],
    "hopf": [0.0038901260785768523, 5.272707999316049],
}
START = {"trailer0": (0.5, -0.3, 0.2), "trailer1": (0.5, -0.3, 0.2, 0.6), "gambier(1)": (0.0, 0.2), "hopf": (0.5, 0.0)}


def run(mid, controls=None, x0=None, g0=0.0, t1=5.0, method=None):
    b = models.load(mid)
    X = b.system(controls)
    return b, reconstruct(X, b.action, b.connection, x0 or b.default_x0, g0, 0.0, t1, method or RK4())


@pytest.mark.parametrize("mid", list(FINAL))
def test_models_reconstruct_within_budget(mid):
    b, rep = run(mid)
    assert b.default_x0 == START[mid]
    assert rep.reference_deviation <= 1e-6
    assert rep.ode_residual <= 1e-5
    assert rep.projection_ok
    np.testing.assert_allclose(rep.x.final, FINAL[mid], atol=1e-6)


@pytest.mark.parametrize("mid", list(FINAL))
def test_curves_share_the_grid_and_start_on_the_orbit(mid):
    b, rep = run(mid, g0=0.3)
    for tr in (rep.gamma, rep.lift, rep.group, rep.reference):
        assert np.array_equal(tr.times, rep.times)
    np.testing.assert_array_equal(rep.x.states[0], b.action.act(0.3, np.array(b.default_x0)))
    np.testing.assert_allclose(b.action.project(rep.x.states), rep.gamma.states, atol=1e-13)


def test_turning_sleigh_closed_form():
    b, rep = run("trailer0", {"b1": C(1.0), "b2": C(0.0)}, x0=(1.0, 0.0, 0.0), t1=5.0)
    t = rep.times
    assert np.max(np.abs(rep.lift.column("xi2") - t)) <= 1e-8
    assert np.max(np.abs(rep.group.states[:, 0] + t)) <= 1e-8
    assert np.max(np.abs(rep.x.column("xi2"))) <= 1e-8


@pytest.mark.parametrize("theta", [0.0, 0.7, 2.5])
def test_straight_sleigh_closed_form(theta):
    b, rep = run("trailer0", {"b1": C(0.0), "b2": C(1.0)}, x0=(0.0, 0.0, theta))
    t = rep.times
    assert np.max(np.abs(rep.group.states[:, 0] - t * math.sin(theta))) <= 1e-8
    assert np.max(np.abs(rep.lift.column("xi2"))) <= 1e-8
    assert np.max(np.abs(rep.x.column("xi2") - t * math.sin(theta))) <= 1e-8
    assert np.max(np.abs(rep.x.column("xi1") - t * math.cos(theta))) <= 1e-8


def test_riccati_closed_form():
    # y' = -(1 + y^2): y = tan(c - t), x = x0 cos(c - t) / cos(c)
    y0, x0 = 0.2, 1.5
    b, rep = run("gambier(1)", {"a1": C(0.0), "a2": C(-1.0)}, x0=(math.log(x0), y0), t1=1.0)
    t = rep.times
    c = math.atan(y0)
    assert np.max(np.abs(rep.x.column("y") - np.tan(c - t))) <= 1e-7
    assert np.max(np.abs(np.exp(rep.x.column("s")) - x0 * np.cos(c - t) / math.cos(c))) <= 1e-7
    assert rep.reference_deviation <= 1e-7


def test_hopf_decoupled_angle():
    b, rep = run("hopf", {"a": C(-1.0), "omega": C(1.0), "delta": C(0.0)}, x0=(0.5, 0.4))
    t = rep.times
    assert np.max(np.abs(rep.x.column("theta") - (0.4 + t))) <= 1e-12
    r = (1.0 + 3.0 * np.exp(2 * t)) ** -0.5
    assert np.max(np.abs(rep.x.column("r") - r)) <= 1e-8


@pytest.mark.parametrize("mid", ["trailer0", "trailer1", "hopf"])
def test_group_offset_only_shifts_the_fiber(mid):
    b, base = run(mid)
    _, shifted = run(mid, g0=1.25)
    fi = b.action.fiber_index
    diff = unwrap_angles(shifted.x.states, b.chart) - unwrap_angles(base.x.states, b.chart)
    assert np.max(np.abs(diff[:, fi] - 1.25)) <= 1e-12
    others = np.delete(diff, fi, axis=1)
    assert np.max(np.abs(others)) == 0.0


def test_adaptive_pipeline():
    b, rep = run("trailer1", method=Adaptive())
    assert len(rep.times) == 5001
    assert rep.reference_deviation <= 1e-6
    assert rep.ode_residual <= 1e-5
    assert rep.projection_ok


def test_non_projectable_field_is_rejected():
    c = Chart(("x", "y"))
    x, y = c.vars()
    X = TDepVectorField([(C(1.0), VectorField(c, [y, 0]))])
    with pytest.raises(ProjectabilityError):
        reconstruct(X, FiberAction(c, "y"), Connection1D(c.d("y")), [0, 0])


def test_bad_connection_is_rejected():
    c = Chart(("x", "y"))
    X = TDepVectorField([(C(1.0), c.partial("x"))])
    with pytest.raises(ConnectionCheckError):
        reconstruct(X, FiberAction(c, "y"), Connection1D(c.d("x")), [0, 0])


# ---- residual diagnostics


def linear_flow():
    c = Chart(("u", "v"))
    X = TDepVectorField([(C(1.0), VectorField(c, [2.0, -0.5]))])
    t = np.linspace(0.0, 1.0, 1001)
    return X, Trajectory(t, np.column_stack([2.0 * t, 1.0 - 0.5 * t]), c)


def test_residual_of_exact_linear_flow():
    X, tr = linear_flow()
    assert residual_sup(tr, X) <= 1e-10


def test_residual_detects_a_corrupted_node():
    X, tr = linear_flow()
    bad = tr.states.copy()
    bad[500, 0] += 1e-2
    h = tr.times[1] - tr.times[0]
    r = residual_sup(Trajectory(tr.times, bad, tr.chart), X)
    assert r >= 1e-1 * 1e-2 / h
    assert r == pytest.approx(1e-2 / (2 * h), rel=1e-6)


def test_residual_needs_enough_nodes():
    X, tr = linear_flow()
    short = Trajectory(tr.times[:50], tr.states[:50], tr.chart)
    with pytest.raises(TooFewNodesError):
        residual_sup(short, X)


def test_residual_of_rk4_trailer0():
    b = models.load("trailer0")
    tr = integrate(b.system(), b.default_x0, 0.0, 5.0, RK4())
    assert residual_sup(tr, b.system()) <= 1e-6

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings

from liesys import _kernels, models
from liesys import symexpr as se
from liesys._kernels import _pykernel
from liesys.errors import NonFiniteStateError
from liesys.geometry import Chart, VectorField
from liesys.ode import ControlSignal, TDepVectorField
from strategies import NAMES, trees

BACKENDS = [_kernels.get_backend(n) for n in _kernels.available_backends()]
compiled = pytest.mark.skipif("cython" not in _kernels.available_backends(), reason="extension not built")


def trailer_system(n=1):
    b = models.load(f"trailer{n}")
    return b.system().system(), np.array(b.default_x0)


@pytest.mark.parametrize("kern", BACKENDS, ids=lambda k: k.NAME)
def test_eval_points_matches_tree_evaluation(kern):
    x, y, z = se.coords(*NAMES)
    exprs = [se.sin(x * y) + z**3, se.cos(x - z) * 2.5, -y, se.const(4.0)]
    prog = _kernels.compile_exprs(exprs, NAMES)
    pts = np.random.default_rng(0).uniform(-2, 2, (50, 3))
    got = kern.eval_points(prog, pts)
    env = {n: pts[:, i] for i, n in enumerate(NAMES)}
    want = np.column_stack([np.asarray(se.evaluate(e, env)) * np.ones(50) for e in exprs])
    np.testing.assert_allclose(got, want, rtol=1e-14, atol=1e-14)


@settings(max_examples=40)
@given(trees(5))
def test_backends_agree_on_random_trees(e):
    prog = _kernels.compile_exprs([e], NAMES)
    pts = np.random.default_rng(1).uniform(-1, 1, (20, 3))
    ref = _pykernel.eval_points(prog, pts)
    for kern in BACKENDS:
        got = kern.eval_points(prog, pts)
        np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-13)


@compiled
def test_rk4_backends_agree():
    sys_, x0 = trailer_system()
    c = _kernels.get_backend("cython")
    a = c.rk4(sys_, x0, 0.0, 1e-3, 2000)
    b = _pykernel.rk4(sys_, x0, 0.0, 1e-3, 2000)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@compiled
def test_dopri_backends_agree():
    sys_, x0 = trailer_system()
    c = _kernels.get_backend("cython")
    ta, xa, ka = c.dopri(sys_, x0, 0.0, 5.0, 1e-8, 1e-10, 1e-3, np.inf)
    tb, xb, kb = _pykernel.dopri(sys_, x0, 0.0, 5.0, 1e-8, 1e-10, 1e-3, np.inf)
    assert len(ta) == len(tb)
    np.testing.assert_allclose(ta, tb, atol=1e-12)
    np.testing.assert_allclose(xa, xb, atol=1e-11)


@pytest.mark.parametrize("kern", BACKENDS, ids=lambda k: k.NAME)
def test_rhs_and_controls(kern):
    sys_, x0 = trailer_system(0)
    t = 0.4
    got = kern.rhs(sys_, t, x0)
    b1, b2 = np.sin(t) + 1.0, np.cos(t)
    want = [b2 * np.cos(x0[2]), b2 * np.sin(x0[2]), b1]
    np.testing.assert_allclose(got, want, rtol=1e-14)


@pytest.mark.parametrize("kern", BACKENDS, ids=lambda k: k.NAME)
def test_polynomial_controls(kern):
    c = Chart(("u",))
    X = TDepVectorField([(ControlSignal.polynomial([1.0, 0.0, 3.0]), c.partial("u"))])
    sys_ = X.system()
    assert kern.rhs(sys_, 2.0, np.zeros(1))[0] == 13.0
    # u' = 1 + 3t^2 integrates exactly under RK4
    out = kern.rk4(sys_, np.zeros(1), 0.0, 0.1, 10)
    assert abs(out[-1, 0] - 2.0) <= 1e-13


@pytest.mark.parametrize("kern", BACKENDS, ids=lambda k: k.NAME)
def test_nonfinite_state(kern):
    c = Chart(("r",))
    (r,) = c.vars()
    sys_ = TDepVectorField([(ControlSignal.constant(1.0), VectorField(c, [r**3]))]).system()
    with pytest.raises(NonFiniteStateError):
        kern.rk4(sys_, np.array([2.0]), 0.0, 0.05, 100)


def _backend_in_subprocess(value: str) -> subprocess.CompletedProcess:
    env = dict(os.environ, LIESYS_BACKEND=value)
    code = "from liesys import _kernels; print(_kernels.backend.NAME)"
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)


def test_backend_selection_by_environment():
    assert _backend_in_subprocess("python").stdout.strip() == "python"
    auto = _backend_in_subprocess("auto").stdout.strip()
    assert auto == ("cython" if "cython" in _kernels.available_backends() else "python")


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")

"""Reconstruction of full solutions from reduced ones for 1-D abelian groups.

Given a t-dependent field ``X`` invariant under a fiber translation ``A`` and a
connection ``eta``, a solution of ``X`` is assembled from

* the reduced solution ``gamma`` of the pushed-forward field,
* the horizontal lift ``lift`` of ``gamma`` starting at ``x0``,
* the group curve ``g`` solving ``g' = eta(X_t)(lift(t))`` with ``g(t0) = g0``,

as ``x(t) = g(t) . lift(t)``.  The whole thing is checked against direct
integration of ``X`` from ``g0 . x0``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import ConnectionCheckError, TooFewNodesError
from .geometry import Chart
from .ode import RK4, Adaptive, Method, TDepVectorField, Trajectory, integrate, quadrature, unwrap_angles
from .principal import (
    Connection1D,
    FiberAction,
    horizontal_lift_field,
    pushforward,
    verify_connection,
)
from .symexpr import SampleSpec

MIN_NODES = 100
REFERENCE = Adaptive(rtol=1e-10, atol=1e-12)
ADAPTIVE_GRID = 5000
# adaptive steps are capped at this many grid spacings so that cubic Hermite
# resampling stays far below the integration tolerances
REFERENCE_STEP_CAP = 10


@dataclass
class ReconstructionReport:
    """All curves of one reconstruction, on a shared time grid, plus residuals."""

    gamma: Trajectory
    lift: Trajectory
    group: Trajectory
    x: Trajectory
    reference: Trajectory
    ode_residual: float
    reference_deviation: float
    projection_deviation: float
    projection_tol: float
    action: FiberAction

    @property
    def times(self) -> np.ndarray:
        return self.x.times

    @property
    def projection_ok(self) -> bool:
        return self.projection_deviation <= self.projection_tol

    def summary(self) -> dict:
        return {
            "nodes": len(self.times),
            "ode_residual": self.ode_residual,
            "reference_deviation": self.reference_deviation,
            "projection_deviation": self.projection_deviation,
            "projection_tol": self.projection_tol,
        }


class _ScalarFamily:
    """``t, p -> sum_j b_j(t) f_j(p)`` for scalar expressions ``f_j``."""

    def __init__(self, controls, exprs, chart: Chart):
        self.controls = list(controls)
        self.program = _kernels.compile_exprs(list(exprs), chart.coords)

    def __call__(self, times, states, kern) -> np.ndarray:
        vals = kern.eval_points(self.program, np.atleast_2d(states))
        out = np.zeros(len(vals))
        for j, c in enumerate(self.controls):
            out += np.asarray(c(times), dtype=float) * vals[:, j]
        return out


def _on_grid(traj: Trajectory, grid: np.ndarray | None) -> Trajectory:
    if grid is None or (len(grid) == len(traj) and np.array_equal(grid, traj.times)):
        return traj
    return Trajectory(grid, traj.at(grid), traj.chart, None)


def reconstruct(
    X: TDepVectorField,
    A: FiberAction,
    eta: Connection1D,
    x0,
    g0: float = 0.0,
    t0: float = 0.0,
    t1: float = 5.0,
    method: Method | None = None,
    *,
    reference: Adaptive = REFERENCE,
    grid: int = ADAPTIVE_GRID,
    sampler: SampleSpec | None = None,
    backend=None,
) -> ReconstructionReport:
    """Rebuild a solution of ``X`` through ``g0 . x0`` from the reduced dynamics.

    ``g0`` is in the additive chart of the group (``log`` of the multiplier for
    the positive half-line).  With an RK4 method the shared grid is the RK4
    grid; with an adaptive method every curve is resampled by dense output onto
    ``grid`` uniform intervals.
    """
    method = method or RK4()
    kern = backend or _kernels.backend
    if X.chart != A.chart or eta.form.chart != A.chart:
        raise ValueError("field, action and connection must share a chart")
    sampler = sampler or A.chart.sampler()
    # pushforward raises ProjectabilityError naming the offending field
    reduced = X.map_fields(lambda f: pushforward(f, A, sampler))
    rep = verify_connection(eta, A, sampler)
    if not rep.passed:
        raise ConnectionCheckError(f"connection check failed: {rep.to_dict()}")

    x0 = np.asarray(x0, dtype=float)
    if isinstance(method, RK4):
        n = max(1, int(round((t1 - t0) / method.h)))
    else:
        n = int(grid)
        method = _capped(method, (t1 - t0) / n)
    spacing = (t1 - t0) / n

    lifted = X.map_fields(lambda f: horizontal_lift_field(f, eta, A))
    gamma = integrate(reduced, A.project(x0), t0, t1, method, kern)
    lift = integrate(lifted, x0, t0, t1, method, kern)
    ts = lift.times if isinstance(method, RK4) else np.linspace(t0, t1, n + 1)

    vertical = _ScalarFamily(X.controls, [eta(f) for f in X.fields], A.chart)
    group = quadrature(lambda t: vertical(t, lift.at(t), kern), t0, t1, ts, initial=float(g0))

    gamma_g = _on_grid(gamma, ts)
    lift_g = _on_grid(lift, ts)
    x = Trajectory(ts, A.act(group.states[:, 0], lift_g.states), A.chart, None)
    x.slopes = X.evaluate_many(ts, x.states, kern)

    reference = _capped(reference, REFERENCE_STEP_CAP * spacing)
    ref = integrate(X, A.act(float(g0), x0), t0, t1, reference, kern)
    ref_g = Trajectory(ts, ref.at(ts), A.chart, None)

    proj_dev = float(np.max(np.abs(A.project(lift_g.states) - gamma_g.states)))
    ref_dev = float(np.max(np.abs(unwrap_angles(x.states, A.chart) - unwrap_angles(ref_g.states, A.chart))))
    return ReconstructionReport(
        gamma=gamma_g,
        lift=lift_g,
        group=group,
        x=x,
        reference=ref_g,
        ode_residual=residual_sup(x, X, kern),
        reference_deviation=ref_dev,
        projection_deviation=proj_dev,
        projection_tol=_projection_tol(method, gamma_g),
        action=A,
    )


def _capped(method: Adaptive, step: float) -> Adaptive:
    return replace(method, max_step=min(method.max_step, step))


def _projection_tol(method: Method, gamma: Trajectory) -> float:
    scale = max(1.0, float(np.max(np.abs(gamma.states))))
    return 10.0 * max(method.tolerance, 1e-14) * scale


def residual_sup(x: Trajectory, X: TDepVectorField, backend=None) -> float:
    """Largest central-difference defect ``|dx/dt - X_t(x)|`` over interior nodes."""
    if len(x) < MIN_NODES:
        raise TooFewNodesError(f"need at least {MIN_NODES} nodes, got {len(x)}")
    kern = backend or _kernels.backend
    states = unwrap_angles(x.states, x.chart)
    ts = x.times
    fd = (states[2:] - states[:-2]) / (ts[2:] - ts[:-2])[:, None]
    rhs = X.evaluate_many(ts[1:-1], states[1:-1], kern)
    return float(np.max(np.abs(fd - rhs)))

"""Explicit integrators for t-dependent vector fields ``sum_j b_j(t) X_j``.

Angles are integrated unwrapped; :meth:`Trajectory.wrapped` maps periodic
coordinates back to ``[0, 2pi)`` for output only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import ChartMismatchError, SolverError
from .geometry import TWO_PI, Chart, VectorField

CONSTANT = "constant"
SINUSOID = "sinusoid"
POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class ControlSignal:
    """A smooth scalar signal of time.

    ``sinusoid`` evaluates ``offset + amplitude * sin(frequency * t + phase)``;
    ``polynomial`` takes coefficients in ascending order.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        n = len(self.params)
        if self.kind == CONSTANT and n != 1:
            raise ValueError("constant signals take one parameter")
        if self.kind == SINUSOID and n != 4:
            raise ValueError("sinusoids take amplitude, frequency, phase, offset")
        if self.kind == POLYNOMIAL and n < 1:
            raise ValueError("polynomials need at least one coefficient")
        if self.kind not in (CONSTANT, SINUSOID, POLYNOMIAL):
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if not all(math.isfinite(p) for p in self.params):
            raise ValueError("signal parameters must be finite")

    @classmethod
    def constant(cls, c: float) -> "ControlSignal":
        return cls(CONSTANT, (c,))

    @classmethod
    def sinusoid(cls, amplitude=1.0, frequency=1.0, phase=0.0, offset=0.0) -> "ControlSignal":
        return cls(SINUSOID, (amplitude, frequency, phase, offset))

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "ControlSignal":
        return cls(POLYNOMIAL, tuple(coefficients))

    def __call__(self, t):
        p = self.params
        if self.kind == CONSTANT:
            return np.full(np.shape(t), p[0]) if np.ndim(t) else p[0]
        if self.kind == SINUSOID:
            return p[3] + p[0] * np.sin(p[1] * np.asarray(t, dtype=float) + p[2])
        v = np.zeros(np.shape(t)) if np.ndim(t) else 0.0
        for c in reversed(p):
            v = v * t + c
        return v

    def packed(self) -> tuple[int, tuple[float, ...]]:
        code = {
            CONSTANT: _kernels.CTRL_CONSTANT,
            SINUSOID: _kernels.CTRL_SINUSOID,
            POLYNOMIAL: _kernels.CTRL_POLYNOMIAL,
        }[self.kind]
        return code, self.params

    def to_dict(self) -> dict:
        if self.kind == CONSTANT:
            return {"kind": CONSTANT, "value": self.params[0]}
        if self.kind == SINUSOID:
            a, w, ph, off = self.params
            return {"kind": SINUSOID, "amplitude": a, "frequency": w, "phase": ph, "offset": off}
        return {"kind": POLYNOMIAL, "coefficients": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlSignal":
        d = dict(d)
        kind = d.pop("kind", None)
        allowed = {
            CONSTANT: {"value"},
            SINUSOID: {"amplitude", "frequency", "phase", "offset"},
            POLYNOMIAL: {"coefficients"},
        }
        if kind not in allowed:
            raise ValueError(f"unknown signal kind {kind!r}")
        extra = set(d) - allowed[kind]
        if extra:
            raise ValueError(f"unknown keys for a {kind} signal: {sorted(extra)}")
        if kind == CONSTANT:
            return cls.constant(d["value"])
        if kind == SINUSOID:
            return cls.sinusoid(
                d.get("amplitude", 1.0), d.get("frequency", 1.0), d.get("phase", 0.0), d.get("offset", 0.0)
            )
        return cls.polynomial(d["coefficients"])


class TDepVectorField:
    """``X(t, x) = sum_j b_j(t) X_j(x)`` on a single chart."""

    def __init__(self, terms: Sequence[tuple[ControlSignal, VectorField]]):
        terms = list(terms)
        if not terms:
            raise ValueError("need at least one term")
        chart = terms[0][1].chart
        for _, f in terms:
            if f.chart != chart:
                raise ChartMismatchError("all fields of a t-dependent field must share a chart")
        self.terms = terms
        self.chart = chart
        self._system = None

    @property
    def controls(self) -> list[ControlSignal]:
        return [c for c, _ in self.terms]

    @property
    def fields(self) -> list[VectorField]:
        return [f for _, f in self.terms]

    def map_fields(self, fn: Callable[[VectorField], VectorField]) -> "TDepVectorField":
        return TDepVectorField([(c, fn(f)) for c, f in self.terms])

    def at(self, t: float) -> VectorField:
        """The frozen field X_t."""
        out = VectorField.zero(self.chart)
        for c, f in self.terms:
            out = out + float(c(t)) * f
        return out

    def system(self) -> _kernels.System:
        if self._system is None:
            exprs = [comp for _, f in self.terms for comp in f.components]
            prog = _kernels.compile_exprs(exprs, self.chart.coords)
            ctrl = _kernels.pack_controls([c.packed() for c in self.controls])
            self._system = _kernels.System(prog, ctrl, self.chart.dim)
        return self._system

    def __call__(self, t: float, x, backend=None) -> np.ndarray:
        kern = backend or _kernels.backend
        return kern.rhs(self.system(), float(t), np.asarray(x, dtype=float))

    def evaluate_many(self, times: np.ndarray, states: np.ndarray, backend=None) -> np.ndarray:
        """X(t_k, x_k) for paired rows, shape ``(n, dim)``."""
        kern = backend or _kernels.backend
        sys_ = self.system()
        vals = kern.eval_points(sys_.program, states)  # (n, nterms * dim)
        dim = self.chart.dim
        out = np.zeros((len(times), dim))
        for j, c in enumerate(self.controls):
            out += np.asarray(c(times), dtype=float)[:, None] * vals[:, j * dim : (j + 1) * dim]
        return out


@dataclass(frozen=True)
class RK4:
    h: float = 1e-3

    @property
    def tolerance(self) -> float:
        return self.h**4


@dataclass(frozen=True)
class Adaptive:
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = math.inf

    @property
    def tolerance(self) -> float:
        return self.rtol


Method = RK4 | Adaptive


@dataclass
class Trajectory:
    """Sampled solution curve on a strictly increasing time grid.

    ``slopes`` (dx/dt at the nodes) enables cubic Hermite dense output.
    """

    times: np.ndarray
    states: np.ndarray
    chart: Chart
    slopes: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float).reshape(len(self.times), -1)
        if self.states.shape[1] != self.chart.dim:
            raise ValueError("state width does not match chart dimension")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.chart.index(name)]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def wrapped(self) -> np.ndarray:
        return wrap_angles(self.states, self.chart)

    def at(self, t) -> np.ndarray:
        """Cubic Hermite interpolation; needs ``slopes``."""
        if self.slopes is None:
            raise ValueError("trajectory carries no slopes for dense output")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ts = self.times
        if np.any(t < ts[0] - 1e-12) or np.any(t > ts[-1] + 1e-12):
            raise ValueError("dense output requested outside the integration window")
        k = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        h = ts[k + 1] - ts[k]
        s = ((t - ts[k]) / h)[:, None]
        y0, y1 = self.states[k], self.states[k + 1]
        m0, m1 = self.slopes[k] * h[:, None], self.slopes[k + 1] * h[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1

    def resample(self, times) -> "Trajectory":
        return Trajectory(np.asarray(times, dtype=float), self.at(times), self.chart)


def wrap_angle(a):
    """Map angles into ``[0, 2pi)``."""
    w = np.mod(a, TWO_PI)
    # tiny negative angles round up to exactly 2 pi
    return np.where(w >= TWO_PI, 0.0, w)


def wrap_angles(states: np.ndarray, chart: Chart) -> np.ndarray:
    out = np.array(states, dtype=float, copy=True)
    for i, c in enumerate(chart.coords):
        if chart.is_periodic(c):
            out[..., i] = wrap_angle(out[..., i])
    return out


def unwrap_angles(states: np.ndarray, chart: Chart) -> np.ndarray:
    """Undo wrapping along axis 0 by removing jumps larger than pi."""
    out = np.array(states, dtype=float, copy=True)
    for i, c in enumerate(chart.coords):
        if chart.is_periodic(c):
            out[:, i] = np.unwrap(out[:, i], period=TWO_PI)
    return out


def _initial_step(X: TDepVectorField, x0: np.ndarray, t0: float, t1: float, m: Adaptive, kern) -> float:
    # Hairer, Norsett & Wanner II.4 starting-step heuristic for order 5
    f0 = X(t0, x0, kern)
    scale = m.atol + m.rtol * np.abs(x0)
    d0 = np.sqrt(np.mean((x0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t1 - t0)
    x1 = x0 + h0 * f0
    f1 = X(t0 + h0, x1, kern)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return float(min(100 * h0, h1, t1 - t0))


def integrate(
    X: TDepVectorField,
    x0,
    t0: float,
    t1: float,
    method: Method | None = None,
    backend=None,
) -> Trajectory:
    """Integrate ``dx/dt = X(t, x)`` from ``x(t0) = x0`` to ``t1``."""
    method = method or RK4()
    kern = backend or _kernels.backend
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    x0 = np.asarray([float(v) for v in X.chart.point(x0).values()] if isinstance(x0, dict) else x0, dtype=float)
    if x0.shape != (X.chart.dim,):
        raise ValueError(f"initial state must have {X.chart.dim} entries")
    if not np.all(np.isfinite(x0)):
        raise SolverError("initial state is not finite")
    sys_ = X.system()
    if isinstance(method, RK4):
        nsteps = max(1, int(round((t1 - t0) / method.h)))
        h = (t1 - t0) / nsteps
        states = kern.rk4(sys_, x0, float(t0), h, nsteps)
        times = t0 + h * np.arange(nsteps + 1)
        times[-1] = t1
        return Trajectory(times, states, X.chart, X.evaluate_many(times, states, kern))
    if isinstance(method, Adaptive):
        h0 = _initial_step(X, x0, t0, t1, method, kern)
        times, states, slopes = kern.dopri(
            sys_, x0, float(t0), float(t1), method.rtol, method.atol, h0, float(method.max_step)
        )
        return Trajectory(times, states, X.chart, slopes)
    raise TypeError(f"unknown method {method!r}")


def quadrature(
    f: Callable[[np.ndarray], np.ndarray],
    t0: float,
    t1: float,
    grid=1000,
    initial: float = 0.0,
) -> Trajectory:
    """Cumulative integral of ``f`` on a grid by composite Simpson per interval.

    Each interval ``[t_k, t_k+1]`` uses ``f`` at both ends and the midpoint,
    which is exactly what classical RK4 does on a pure quadrature.
    ``grid`` is either a node array or a number of intervals.
    """
    if isinstance(grid, (int, np.integer)):
        ts = np.linspace(t0, t1, int(grid) + 1)
    else:
        ts = np.asarray(grid, dtype=float)
        if not (np.isclose(ts[0], t0) and np.isclose(ts[-1], t1)):
            raise ValueError("grid must span [t0, t1]")
    h = np.diff(ts)
    mids = ts[:-1] + 0.5 * h
    fn = np.asarray(f(ts), dtype=float) * np.ones_like(ts)
    fm = np.asarray(f(mids), dtype=float) * np.ones_like(mids)
    incr = h / 6.0 * (fn[:-1] + 4.0 * fm + fn[1:])
    values = initial + np.concatenate([[0.0], np.cumsum(incr)])
    chart = Chart(("g",))
    return Trajectory(ts, values[:, None], chart, fn[:, None])

"""One-dimensional principal actions, connections and horizontal lifts.

Every bundle handled here is a trivial product whose structure group acts by
translating one distinguished *fiber* coordinate.  The multiplicative group
of positive reals is treated in its logarithmic chart, where it also acts by
translation, so a single additive implementation covers the real line, the
circle and the positive half-line.

For a one-dimensional abelian group the left-translation and adjoint terms
of the general reconstruction formula are identities, and the generator map
``v -> v#`` is just ``v * Y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import symexpr as se
from .errors import ChartMismatchError, ProjectabilityError
from .geometry import Chart, KForm, VectorField, lie_derivative_form, pair
from .symexpr import SampleSpec

ADDITIVE = "additive-line"
CIRCLE = "circle"
MULTIPLICATIVE = "multiplicative-positive-line"
KINDS = (ADDITIVE, CIRCLE, MULTIPLICATIVE)

CHECK_TOL = 1e-9


@dataclass(frozen=True)
class FiberAction:
    """Translations of ``fiber`` on ``chart`` by a group element.

    For the multiplicative kind ``fiber`` is the log coordinate ``s = log x``
    and ``label`` names the original coordinate ``x``.
    """

    chart: Chart
    fiber: str
    kind: str = ADDITIVE
    label: str | None = None
    generator: VectorField = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown group kind {self.kind!r}")
        self.chart.index(self.fiber)
        if self.generator is None:
            object.__setattr__(self, "generator", self.chart.partial(self.fiber))
        elif self.generator.chart != self.chart:
            raise ChartMismatchError("generator lives on a different chart")
        if self.kind == CIRCLE and not self.chart.is_periodic(self.fiber):
            raise ValueError("circle actions need a periodic fiber coordinate")

    @property
    def fiber_index(self) -> int:
        return self.chart.index(self.fiber)

    @property
    def quotient_chart(self) -> Chart:
        return self.chart.without(self.fiber)

    def act(self, g, states) -> np.ndarray:
        """Apply the group element(s) ``g`` (canonical additive chart) to states."""
        out = np.array(states, dtype=float, copy=True)
        out[..., self.fiber_index] = out[..., self.fiber_index] + g
        return out

    def project(self, states) -> np.ndarray:
        return np.delete(np.asarray(states, dtype=float), self.fiber_index, axis=-1)

    def group_element(self, g):
        """Group element in its natural chart (``exp`` for the multiplicative kind)."""
        return np.exp(g) if self.kind == MULTIPLICATIVE else g


@dataclass(frozen=True)
class Connection1D:
    """A principal connection given by a 1-form on the total chart."""

    form: KForm

    def __post_init__(self):
        if self.form.degree != 1:
            raise ValueError("a connection form has degree 1")

    def __call__(self, X: VectorField) -> se.Expr:
        return pair(self.form, X)


def _fiber_derivatives(X: VectorField, A: FiberAction) -> list[se.Expr]:
    q = A.fiber
    return [se.differentiate(c, q) for name, c in zip(X.chart.coords, X.components) if name != q]


def is_projectable(X: VectorField, A: FiberAction, sampler: SampleSpec | None = None) -> bool:
    """True iff the non-fiber components of ``X`` do not vary along the fiber."""
    if X.chart != A.chart:
        raise ChartMismatchError("field and action live on different charts")
    sampler = sampler or A.chart.sampler()
    return all(se.is_zero(d, sampler) for d in _fiber_derivatives(X, A))


def pushforward(X: VectorField, A: FiberAction, sampler: SampleSpec | None = None) -> VectorField:
    """The projected field on the quotient chart."""
    if not is_projectable(X, A, sampler):
        raise ProjectabilityError(f"{X} does not project along {A.fiber!r}")
    quot = A.quotient_chart
    comps = {}
    for name, c in zip(X.chart.coords, X.components):
        if name == A.fiber:
            continue
        if A.fiber in c.coords:
            # independent of the fiber up to sampling; evaluate on the zero section
            c = se.substitute(c, {A.fiber: 0.0})
        comps[name] = c
    return VectorField.from_dict(quot, comps)


def horizontal_lift_field(X: VectorField, eta: Connection1D, A: FiberAction) -> VectorField:
    """``X - eta(X) Y``, the horizontal part of ``X``."""
    if X.chart != A.chart or eta.form.chart != A.chart:
        raise ChartMismatchError("field, connection and action must share a chart")
    return X - eta(X) * A.generator


def vertical_part(X: VectorField, eta: Connection1D) -> se.Expr:
    """The Lie-algebra coordinate ``eta(X)`` of the vertical part of ``X``."""
    return eta(X)


@dataclass
class ConnectionReport:
    pairing_residual: float
    invariance_residual: float
    kernel_rank_ok: bool
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.pairing_residual <= self.tol
            and self.invariance_residual <= self.tol
            and self.kernel_rank_ok
        )

    def to_dict(self) -> dict:
        return {
            "pairing_residual": self.pairing_residual,
            "invariance_residual": self.invariance_residual,
            "kernel_rank_ok": self.kernel_rank_ok,
            "passed": self.passed,
        }


def verify_connection(
    eta: Connection1D,
    A: FiberAction,
    sampler: SampleSpec | None = None,
    tol: float = CHECK_TOL,
) -> ConnectionReport:
    """Check ``eta(Y) = 1`` and ``L_Y eta = 0`` at sampled points."""
    sampler = sampler or A.chart.sampler()
    pairing = se.max_abs(eta(A.generator) - 1.0, sampler)
    invariance = lie_derivative_form(A.generator, eta.form).max_abs(sampler)
    # ker(eta) has corank one wherever eta does not vanish
    pts = A.chart.sample(sampler, stream=3)
    env = {c: pts[:, i] for i, c in enumerate(A.chart.coords)}
    norms = np.zeros(len(pts))
    for coeff in eta.form.terms.values():
        norms += np.asarray(se.evaluate(coeff, env)) ** 2 * np.ones(len(pts))
    kernel_ok = bool(np.all(np.sqrt(norms) > tol))
    return ConnectionReport(pairing, invariance, kernel_ok, tol)

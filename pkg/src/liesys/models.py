"""Registry of the n-trailer, Gambier and Hopf systems.

Each :class:`ModelBundle` carries the displayed vector fields, Lie
symmetries, dual frames, the principal action used for reduction and its
connection form.  Bundles verify their own dual-frame, connection and
symmetry identities when loaded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

from . import symexpr as se
from .errors import ModelVerificationError, UnknownModelError
from .geometry import Chart, KForm, VectorField, lie_bracket, lie_derivative_form, pair
from .ode import ControlSignal, TDepVectorField
from .principal import ADDITIVE, CIRCLE, MULTIPLICATIVE, Connection1D, FiberAction, verify_connection

MODEL_IDS = ("trailer0", "trailer1", "gambier", "hopf")
LOAD_TOL = 1e-9


def trailer_chart(n: int) -> Chart:
    thetas = tuple(f"theta{i}" for i in range(n + 1))
    return Chart(("xi1", "xi2") + thetas, periodic=frozenset(thetas))


def trailer(n: int) -> tuple[VectorField, VectorField]:
    """Generators of the n-trailer constraint distribution on R^2 x (S^1)^(n+1)."""
    if n < 0:
        raise ValueError("the number of trailers must be non-negative")
    chart = trailer_chart(n)
    th = [se.coord(f"theta{i}") for i in range(n + 1)]

    def pi(i: int) -> se.Expr:
        return se.mul(*(se.cos(th[j] - th[j - 1]) for j in range(i + 1, n + 1)))

    comps = {
        "xi1": pi(0) * se.cos(th[0]),
        "xi2": pi(0) * se.sin(th[0]),
    }
    for i in range(n):
        comps[f"theta{i}"] = pi(i + 1) * se.sin(th[i + 1] - th[i])
    return chart.partial(f"theta{n}"), VectorField.from_dict(chart, comps)


@dataclass
class ModelBundle:
    """Everything the registry knows about one system."""

    id: str
    chart: Chart
    fields: dict[str, VectorField]
    drift: list[str]
    controlled: dict[str, str]
    vg_generators: list[str]
    symmetries: dict[str, VectorField]
    dual_frame: dict[str, KForm]
    action: FiberAction
    connection: Connection1D
    default_controls: dict[str, ControlSignal]
    default_x0: tuple[float, ...]
    expected: dict = field(default_factory=dict)
    tables: dict[str, tuple[list[str], dict]] = field(default_factory=dict)
    symmetry_targets: dict[str, list[str]] = field(default_factory=dict)
    invariant_forms: dict[str, list[str]] = field(default_factory=dict)
    singular_loci: list[str] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def control_slots(self) -> list[str]:
        return list(self.controlled)

    def system(self, controls: Mapping[str, ControlSignal] | None = None) -> TDepVectorField:
        """The t-dependent field with the given (or default) control signals."""
        ctrl = dict(self.default_controls)
        for k, v in (controls or {}).items():
            if k not in self.controlled:
                raise KeyError(f"{self.id} has no control slot {k!r}; slots: {self.control_slots}")
            ctrl[k] = v
        terms = [(ControlSignal.constant(1.0), self.fields[f]) for f in self.drift]
        terms += [(ctrl[slot], self.fields[f]) for slot, f in self.controlled.items()]
        return TDepVectorField(terms)

    def sampler(self, seed: int = 0, n: int = 25):
        return self.chart.sampler(seed, n)

    def verify_on_load(self, seed: int = 0) -> None:
        s = self.sampler(seed)
        names = list(self.symmetries)
        for i, (a_name, alpha) in enumerate(self.dual_frame.items()):
            for j, y_name in enumerate(names):
                resid = se.max_abs(pair(alpha, self.symmetries[y_name]) - (1.0 if i == j else 0.0), s)
                if resid > LOAD_TOL:
                    raise ModelVerificationError(
                        f"{self.id}: {a_name}({y_name}) deviates from the dual-frame value by {resid:.3e}"
                    )
        rep = verify_connection(self.connection, self.action, s)
        if not rep.passed:
            raise ModelVerificationError(f"{self.id}: connection check failed {rep.to_dict()}")
        for y_name, targets in self.symmetry_targets.items():
            for f in targets:
                resid = lie_bracket(self.symmetries[y_name], self.fields[f]).max_abs(s)
                if resid > LOAD_TOL:
                    raise ModelVerificationError(
                        f"{self.id}: L_{y_name} {f} is not zero (residual {resid:.3e})"
                    )


def _trailer0() -> ModelBundle:
    chart = trailer_chart(0)
    xi1, xi2, th0 = chart.vars()
    X1, X2 = trailer(0)
    X3 = VectorField.from_dict(chart, {"xi1": -se.sin(th0), "xi2": se.cos(th0)})
    Y1 = VectorField.from_dict(chart, {"xi1": -xi2, "xi2": xi1, "theta0": 1.0})
    Y2, Y3 = chart.partial("xi1"), chart.partial("xi2")
    d = chart.d
    alpha = {
        "alpha1": d("theta0"),
        "alpha2": d("xi1") + xi2 * d("theta0"),
        "alpha3": d("xi2") - xi1 * d("theta0"),
    }
    action = FiberAction(chart, "xi2", ADDITIVE, generator=Y3)
    basis = ["X1", "X2", "X3"]
    return ModelBundle(
        id="trailer0",
        chart=chart,
        fields={"X1": X1, "X2": X2, "X3": X3},
        drift=[],
        controlled={"b1": "X1", "b2": "X2"},
        vg_generators=["X1", "X2"],
        symmetries={"Y1": Y1, "Y2": Y2, "Y3": Y3},
        dual_frame=alpha,
        action=action,
        connection=Connection1D(alpha["alpha3"]),
        default_controls={
            "b1": ControlSignal.sinusoid(1.0, 1.0, 0.0, 1.0),
            "b2": ControlSignal.sinusoid(1.0, 1.0, 1.5707963267948966, 0.0),
        },
        default_x0=(0.5, -0.3, 0.2),
        expected={
            "vg_dim": 3,
            "flag": [2, 3],
            "locally_automorphic": basis,
            "contact_forms": ["alpha2", "alpha3"],
        },
        tables={
            "vg": (basis, {("X1", "X2"): {"X3": 1.0}, ("X1", "X3"): {"X2": -1.0}}),
            "symmetries": (
                ["Y1", "Y2", "Y3"],
                {("Y1", "Y2"): {"Y3": -1.0}, ("Y1", "Y3"): {"Y2": 1.0}},
            ),
        },
        symmetry_targets={y: basis for y in ("Y1", "Y2", "Y3")},
        invariant_forms={"alpha1": basis, "alpha2": basis, "alpha3": basis},
        singular_loci=[],
    )


def _trailer1() -> ModelBundle:
    chart = trailer_chart(1)
    xi1, xi2, th0, th1 = chart.vars()
    X1, X2 = trailer(1)
    c10, s10 = se.cos(th1 - th0), se.sin(th1 - th0)
    # sin(theta0) d/dxi1 - cos(theta0) d/dxi2 + d/dtheta0
    W = VectorField.from_dict(chart, {"xi1": se.sin(th0), "xi2": -se.cos(th0), "theta0": 1.0})
    X3 = VectorField.from_dict(
        chart, {"xi1": -s10 * se.cos(th0), "xi2": -s10 * se.sin(th0), "theta0": c10}
    )
    X4 = W
    X5 = c10 * W
    X6 = -s10 * W
    Z1, Z2, Z3 = X1 + X4, X2 + X6, X3 - X5
    Y1 = VectorField.from_dict(chart, {"xi1": -xi2, "xi2": xi1, "theta0": 1.0, "theta1": 1.0})
    Y2, Y3 = chart.partial("xi1"), chart.partial("xi2")
    Y4 = W
    d = chart.d
    a4 = d("theta0") - d("theta1")
    alpha = {
        "alpha1": d("theta1"),
        "alpha2": d("xi1") + xi2 * d("theta1") - se.sin(th0) * a4,
        "alpha3": d("xi2") + se.cos(th0) * a4 - xi1 * d("theta1"),
        "alpha4": a4,
    }
    basis = ["X1", "X2", "X3", "X4", "X5", "X6"]
    sub = ["Z1", "Z2", "Z3", "X4"]
    vg_table = {
        ("X1", "X2"): {"X3": 1.0},
        ("X1", "X3"): {"X2": -1.0},
        ("X1", "X5"): {"X6": 1.0},
        ("X1", "X6"): {"X5": -1.0},
        ("X2", "X3"): {"X4": 1.0},
        ("X2", "X4"): {"X5": 1.0},
        ("X2", "X5"): {"X4": 1.0},
        ("X3", "X4"): {"X6": 1.0},
        ("X3", "X6"): {"X4": 1.0},
        ("X4", "X5"): {"X6": -1.0},
        ("X4", "X6"): {"X5": 1.0},
        ("X5", "X6"): {"X4": 1.0},
    }
    return ModelBundle(
        id="trailer1",
        chart=chart,
        fields={
            "X1": X1, "X2": X2, "X3": X3, "X4": X4, "X5": X5, "X6": X6,
            "Z1": Z1, "Z2": Z2, "Z3": Z3,
        },
        drift=[],
        controlled={"b1": "X1", "b2": "X2"},
        vg_generators=["X1", "X2"],
        symmetries={"Y1": Y1, "Y2": Y2, "Y3": Y3, "Y4": Y4},
        dual_frame=alpha,
        action=FiberAction(chart, "xi2", ADDITIVE, generator=Y3),
        connection=Connection1D(alpha["alpha3"]),
        default_controls={
            "b1": ControlSignal.sinusoid(1.0, 1.0, 0.0, 1.0),
            "b2": ControlSignal.sinusoid(1.0, 1.0, 1.5707963267948966, 0.0),
        },
        default_x0=(0.5, -0.3, 0.2, 0.6),
        expected={"vg_dim": 6, "flag": [2, 3, 4], "locally_automorphic": sub},
        tables={
            "vg": (basis, vg_table),
            "subalgebra": (sub, {("Z1", "Z2"): {"Z3": 1.0}, ("Z1", "Z3"): {"Z2": -1.0}}),
            "sl2": (
                ["X4", "X5", "X6"],
                {("X4", "X5"): {"X6": -1.0}, ("X4", "X6"): {"X5": 1.0}, ("X5", "X6"): {"X4": 1.0}},
            ),
            "symmetries": (
                ["Y1", "Y2", "Y3", "Y4"],
                {("Y1", "Y2"): {"Y3": -1.0}, ("Y1", "Y3"): {"Y2": 1.0}},
            ),
        },
        symmetry_targets={"Y1": sub, "Y2": basis, "Y3": basis, "Y4": sub},
        invariant_forms={"alpha2": basis, "alpha3": basis},
        singular_loci=["cos(theta1 - theta0) = 0: the trailer axle is perpendicular to the car"],
    )


def _gambier(n: int) -> ModelBundle:
    if n == 0 or int(n) != n:
        raise ValueError("the Gambier model needs a non-zero integer n")
    n = int(n)
    # log chart s = log x on the half-plane x > 0
    chart = Chart(("s", "y"))
    s, y = chart.vars()
    fields = {
        "X0": VectorField.from_dict(chart, {"s": n * y, "y": -(y**2)}),
        "X1": VectorField.from_dict(chart, {"y": y}),
        "X2": chart.partial("y"),
    }
    Y = chart.partial("s")
    ds = chart.d("s")
    return ModelBundle(
        id="gambier",
        chart=chart,
        fields=fields,
        drift=["X0"],
        controlled={"a1": "X1", "a2": "X2"},
        vg_generators=["X0", "X1", "X2"],
        symmetries={"Y": Y},
        dual_frame={"alpha": ds},
        action=FiberAction(chart, "s", MULTIPLICATIVE, label="x", generator=Y),
        connection=Connection1D(ds),
        default_controls={
            "a1": ControlSignal.constant(0.3),
            "a2": ControlSignal.sinusoid(0.5, 1.0, 0.0, 0.0),
        },
        default_x0=(0.0, 0.2),
        # {X0, X1, X2, d/ds} closes: [X2, X0] = n d/ds - 2 X1
        expected={"vg_dim": 4, "reduced_dim": 3},
        symmetry_targets={"Y": ["X0", "X1", "X2"]},
        singular_loci=["x > 0 is enforced by working in s = log x"],
        params={"n": n},
    )


def _hopf() -> ModelBundle:
    chart = Chart(("r", "theta"), periodic=frozenset({"theta"}), ranges=(("r", 0.2, 1.5),))
    r, th = chart.vars()
    fields = {
        "P": VectorField.from_dict(chart, {"r": r**3}),
        "Q": VectorField.from_dict(chart, {"r": r}),
        "W": chart.partial("theta"),
        "U": VectorField.from_dict(chart, {"theta": r}),
    }
    Y = chart.partial("theta")
    dth = chart.d("theta")
    return ModelBundle(
        id="hopf",
        chart=chart,
        fields=fields,
        drift=["P"],
        controlled={"a": "Q", "omega": "W", "delta": "U"},
        vg_generators=["P", "Q", "W", "U"],
        symmetries={"Y": Y},
        dual_frame={"alpha": dth},
        action=FiberAction(chart, "theta", CIRCLE, generator=Y),
        connection=Connection1D(dth),
        default_controls={
            "a": ControlSignal.constant(-1.0),
            "omega": ControlSignal.constant(1.0),
            "delta": ControlSignal.constant(0.5),
        },
        default_x0=(0.5, 0.0),
        expected={"vg_dim": None, "reduced_dim": 2},
        symmetry_targets={"Y": ["P", "Q", "W", "U"]},
        singular_loci=["r > 0; r = 0 is a fixed circle of the action"],
    )


_ID_RE = re.compile(r"^(trailer0|trailer1|hopf|gambier)(?:\((-?\d+)\))?$")


def parse_id(model: str, n: int | None = None) -> tuple[str, int | None]:
    m = _ID_RE.match(model.strip().lower()) if isinstance(model, str) else None
    if not m:
        raise UnknownModelError(f"unknown model {model!r}; known: {', '.join(MODEL_IDS)}")
    base, arg = m.group(1), m.group(2)
    if arg is not None:
        if base != "gambier":
            raise UnknownModelError(f"model {base!r} takes no parameter")
        n = int(arg)
    if base == "gambier" and n is None:
        n = 1
    return base, (n if base == "gambier" else None)


def load(model: str, n: int | None = None, verify: bool = True) -> ModelBundle:
    """Build and self-verify a bundle; ``gambier`` takes a non-zero integer ``n``."""
    base, n = parse_id(model, n)
    if base == "trailer0":
        bundle = _trailer0()
    elif base == "trailer1":
        bundle = _trailer1()
    elif base == "gambier":
        bundle = _gambier(n)
    else:
        bundle = _hopf()
    if verify:
        bundle.verify_on_load()
    return bundle


def describe() -> list[dict]:
    """Registry summary for the ``models`` command."""
    out = []
    for mid in MODEL_IDS:
        b = load(mid, verify=False)
        out.append(
            {
                "id": mid,
                "coordinates": list(b.chart.coords),
                "control_slots": b.control_slots,
                "fiber": b.action.fiber,
                "group": b.action.kind,
                "singular_loci": b.singular_loci,
                **({"parameters": {"n": "non-zero integer, default 1"}} if mid == "gambier" else {}),
            }
        )
    return out

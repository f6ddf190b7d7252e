"""Charts, vector fields and differential forms with exact components.

All objects live on a single global chart; components are
:class:`~liesys.symexpr.Expr` trees, so brackets, exterior derivatives and
Lie derivatives are computed symbolically and only identity checks go
through sampling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import symexpr as se
from .errors import ChartMismatchError, DegeneratePointError, DegreeError
from .symexpr import Expr, SampleSpec

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Chart:
    """Ordered coordinate names with per-coordinate sampling ranges.

    Periodic coordinates (circle factors) default to ``[0, 2pi)``, all others
    to ``[-2, 2]``; ``ranges`` overrides either.
    """

    coords: tuple[str, ...]
    periodic: frozenset[str] = frozenset()
    ranges: tuple[tuple[str, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "periodic", frozenset(self.periodic))
        if len(set(self.coords)) != len(self.coords):
            raise ValueError(f"duplicate coordinate names in {self.coords}")
        unknown = (self.periodic | {r[0] for r in self.ranges}) - set(self.coords)
        if unknown:
            raise ValueError(f"unknown coordinates {sorted(unknown)}")
        object.__setattr__(
            self, "ranges", tuple((n, float(lo), float(hi)) for n, lo, hi in self.ranges)
        )

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, name: str) -> int:
        try:
            return self.coords.index(name)
        except ValueError:
            raise KeyError(f"{name!r} is not a coordinate of {self.coords}") from None

    def range_of(self, name: str) -> tuple[float, float]:
        for n, lo, hi in self.ranges:
            if n == name:
                return lo, hi
        if name in self.periodic:
            return 0.0, TWO_PI
        return -2.0, 2.0

    def is_periodic(self, name: str) -> bool:
        return name in self.periodic

    def sampler(self, seed: int = 0, n: int = 25) -> SampleSpec:
        return SampleSpec(
            seed=seed, n=n, ranges=tuple((c, *self.range_of(c)) for c in self.coords)
        )

    def sample(self, sampler: SampleSpec, stream: int = 0, n: int | None = None) -> np.ndarray:
        """Sample points as an ``(n, dim)`` array."""
        pts = sampler.points(self.coords, stream, n)
        return np.column_stack([pts[c] for c in self.coords])

    def with_ranges(self, **ranges: tuple[float, float]) -> "Chart":
        merged = {n: (lo, hi) for n, lo, hi in self.ranges}
        merged.update(ranges)
        return Chart(self.coords, self.periodic, tuple((n, *merged[n]) for n in merged))

    def without(self, name: str) -> "Chart":
        self.index(name)
        return Chart(
            tuple(c for c in self.coords if c != name),
            self.periodic - {name},
            tuple(r for r in self.ranges if r[0] != name),
        )

    def vars(self) -> tuple[Expr, ...]:
        return se.coords(*self.coords)

    def point(self, p) -> dict[str, float]:
        """Normalize a point given as a mapping or a sequence in chart order."""
        if isinstance(p, Mapping):
            return {c: p[c] for c in self.coords if c in p}
        p = list(p)
        if len(p) != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {len(p)}")
        return dict(zip(self.coords, p))

    def partial(self, name: str) -> "VectorField":
        """The coordinate field d/d(name)."""
        i = self.index(name)
        return VectorField(self, tuple(se.ONE if k == i else se.ZERO for k in range(self.dim)))

    def d(self, name: str) -> "KForm":
        """The coordinate 1-form d(name)."""
        return KForm(self, 1, {(self.index(name),): se.ONE})


def _same_chart(*objs) -> Chart:
    chart = objs[0].chart
    for o in objs[1:]:
        if o.chart != chart:
            raise ChartMismatchError(f"chart mismatch: {chart.coords} vs {o.chart.coords}")
    return chart


def _scalar(s) -> Expr:
    return se.as_expr(s)


class VectorField:
    """A vector field with one exact component per chart coordinate."""

    __slots__ = ("chart", "components")

    def __init__(self, chart: Chart, components: Sequence):
        comps = tuple(se.as_expr(c) for c in components)
        if len(comps) != chart.dim:
            raise ValueError(f"{len(comps)} components for a {chart.dim}-dimensional chart")
        self.chart = chart
        self.components = comps

    @classmethod
    def from_dict(cls, chart: Chart, comps: Mapping[str, object]) -> "VectorField":
        for name in comps:
            chart.index(name)
        return cls(chart, [comps.get(c, se.ZERO) for c in chart.coords])

    @classmethod
    def zero(cls, chart: Chart) -> "VectorField":
        return cls(chart, [se.ZERO] * chart.dim)

    def __getitem__(self, name: str) -> Expr:
        return self.components[self.chart.index(name)]

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_chart(self, other)
        return VectorField(self.chart, [a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "VectorField") -> "VectorField":
        _same_chart(self, other)
        return VectorField(self.chart, [a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> "VectorField":
        return VectorField(self.chart, [-a for a in self.components])

    def __mul__(self, s) -> "VectorField":
        s = _scalar(s)
        return VectorField(self.chart, [s * a for a in self.components])

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        return self.chart == other.chart and self.components == other.components

    def __hash__(self):
        return hash((self.chart, self.components))

    def __call__(self, f) -> Expr:
        """Directional derivative X(f)."""
        f = se.as_expr(f)
        return se.add(
            *(
                se.mul(c, se.differentiate(f, q))
                for q, c in zip(self.chart.coords, self.components)
                if q in f.coords
            )
        )

    def evaluate(self, p) -> np.ndarray:
        pt = self.chart.point(p)
        return np.array([se.evaluate(c, pt) for c in self.components], dtype=float)

    def evaluate_many(self, pts: np.ndarray) -> np.ndarray:
        """Values at an ``(n, dim)`` array of points, shape ``(n, dim)``."""
        pts = np.asarray(pts, dtype=float)
        env = {c: pts[:, i] for i, c in enumerate(self.chart.coords)}
        out = np.empty_like(pts)
        for i, comp in enumerate(self.components):
            out[:, i] = se.evaluate(comp, env)
        return out

    def max_abs(self, sampler: SampleSpec | None = None) -> float:
        sampler = sampler or self.chart.sampler()
        return max((se.max_abs(c, sampler) for c in self.components), default=0.0)

    def is_zero(self, sampler: SampleSpec | None = None, tol: float = se.DEFAULT_TOL) -> bool:
        return self.max_abs(sampler) <= tol

    def on(self, chart: Chart) -> "VectorField":
        """Re-express on ``chart`` by coordinate name; absent names must carry zero."""
        for c, comp in zip(self.chart.coords, self.components):
            if c not in chart.coords and comp != se.ZERO:
                raise ChartMismatchError(f"component along {c!r} is not zero: {comp}")
        return VectorField.from_dict(
            chart, {c: comp for c, comp in zip(self.chart.coords, self.components) if c in chart.coords}
        )

    def __repr__(self):
        terms = [
            f"({comp})*d/d{c}" for c, comp in zip(self.chart.coords, self.components) if comp != se.ZERO
        ]
        return "VectorField(" + (" + ".join(terms) or "0") + ")"


def _sort_sign(idx: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation sorting ``idx``; 0 if an index repeats."""
    if len(set(idx)) != len(idx):
        return 0, ()
    inversions = sum(1 for a, b in itertools.combinations(idx, 2) if a > b)
    return (-1 if inversions % 2 else 1), tuple(sorted(idx))


class KForm:
    """A differential k-form stored as ``{increasing index tuple: coefficient}``."""

    __slots__ = ("chart", "degree", "terms")

    def __init__(self, chart: Chart, degree: int, terms: Mapping[tuple[int, ...], object] | None = None):
        if not 0 <= degree <= chart.dim:
            raise DegreeError(f"degree {degree} on a {chart.dim}-dimensional chart")
        clean: dict[tuple[int, ...], Expr] = {}
        for key, coeff in (terms or {}).items():
            key = tuple(key)
            if len(key) != degree or any(a >= b for a, b in zip(key, key[1:])):
                raise ValueError(f"bad multi-index {key} for a {degree}-form")
            if any(not 0 <= i < chart.dim for i in key):
                raise ValueError(f"multi-index {key} out of range")
            coeff = se.as_expr(coeff)
            if coeff != se.ZERO:
                clean[key] = coeff
        self.chart = chart
        self.degree = degree
        self.terms = clean

    @classmethod
    def from_names(cls, chart: Chart, degree: int, terms: Mapping) -> "KForm":
        """Build from keys given as coordinate-name tuples in any order."""
        acc: dict[tuple[int, ...], Expr] = {}
        for names, coeff in terms.items():
            if isinstance(names, str):
                names = (names,)
            sign, key = _sort_sign([chart.index(n) for n in names])
            if sign:
                acc[key] = acc.get(key, se.ZERO) + sign * se.as_expr(coeff)
        return cls(chart, degree, acc)

    @classmethod
    def function(cls, chart: Chart, f) -> "KForm":
        return cls(chart, 0, {(): f})

    def coefficient(self, *names: str) -> Expr:
        sign, key = _sort_sign([self.chart.index(n) for n in names])
        if not sign:
            return se.ZERO
        return sign * self.terms.get(key, se.ZERO)

    def __add__(self, other: "KForm") -> "KForm":
        _same_chart(self, other)
        if self.degree != other.degree:
            raise DegreeError("cannot add forms of different degree")
        acc = dict(self.terms)
        for k, v in other.terms.items():
            acc[k] = acc.get(k, se.ZERO) + v
        return KForm(self.chart, self.degree, acc)

    def __neg__(self) -> "KForm":
        return KForm(self.chart, self.degree, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "KForm") -> "KForm":
        return self + (-other)

    def __mul__(self, s) -> "KForm":
        s = _scalar(s)
        return KForm(self.chart, self.degree, {k: s * v for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __xor__(self, other: "KForm") -> "KForm":
        return wedge(self, other)

    def __eq__(self, other):
        if not isinstance(other, KForm):
            return NotImplemented
        return self.chart == other.chart and self.degree == other.degree and self.terms == other.terms

    def __hash__(self):
        return hash((self.chart, self.degree, tuple(sorted(self.terms.items()))))

    def max_abs(self, sampler: SampleSpec | None = None) -> float:
        sampler = sampler or self.chart.sampler()
        return max((se.max_abs(c, sampler) for c in self.terms.values()), default=0.0)

    def is_zero(self, sampler: SampleSpec | None = None, tol: float = se.DEFAULT_TOL) -> bool:
        return self.max_abs(sampler) <= tol

    def __repr__(self):
        parts = []
        for key, coeff in sorted(self.terms.items()):
            basis = "^".join(f"d{self.chart.coords[i]}" for i in key) or "1"
            parts.append(f"({coeff})*{basis}")
        return f"KForm[{self.degree}](" + (" + ".join(parts) or "0") + ")"


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y] with components X(Y^k) - Y(X^k)."""
    chart = _same_chart(X, Y)
    return VectorField(chart, [se.add(X(yk), -Y(xk)) for xk, yk in zip(X.components, Y.components)])


def lie_derivative_vf(Y: VectorField, Z: VectorField) -> VectorField:
    """L_Y Z, which is the bracket [Y, Z]."""
    return lie_bracket(Y, Z)


def _d(omega: KForm) -> KForm:
    chart = omega.chart
    if omega.degree >= chart.dim:
        return None
    acc: dict[tuple[int, ...], Expr] = {}
    for key, coeff in omega.terms.items():
        for j, q in enumerate(chart.coords):
            if j in key or q not in coeff.coords:
                continue
            dcoeff = se.differentiate(coeff, q)
            if dcoeff == se.ZERO:
                continue
            # moving dq_j past the indices below it
            sign = -1 if sum(1 for i in key if i < j) % 2 else 1
            new = tuple(sorted(key + (j,)))
            acc[new] = acc.get(new, se.ZERO) + sign * dcoeff
    return KForm(chart, omega.degree + 1, acc)


def exterior_derivative(omega: KForm) -> KForm:
    if omega.degree >= omega.chart.dim:
        raise DegreeError(
            f"d of a {omega.degree}-form on a {omega.chart.dim}-dimensional chart overflows"
        )
    return _d(omega)


def wedge(omega: KForm, sigma: KForm) -> KForm:
    chart = _same_chart(omega, sigma)
    deg = omega.degree + sigma.degree
    if deg > chart.dim:
        raise DegreeError(f"wedge of degree {deg} exceeds chart dimension {chart.dim}")
    acc: dict[tuple[int, ...], Expr] = {}
    for ka, ca in omega.terms.items():
        for kb, cb in sigma.terms.items():
            sign, key = _sort_sign(ka + kb)
            if sign:
                acc[key] = acc.get(key, se.ZERO) + sign * se.mul(ca, cb)
    return KForm(chart, deg, acc)


def interior(X: VectorField, omega: KForm) -> KForm:
    """Contraction i_X omega (inserting X in the first slot)."""
    chart = _same_chart(X, omega)
    if omega.degree == 0:
        return KForm(chart, 0)
    acc: dict[tuple[int, ...], Expr] = {}
    for key, coeff in omega.terms.items():
        for s, i in enumerate(key):
            comp = X.components[i]
            if comp == se.ZERO:
                continue
            rest = key[:s] + key[s + 1 :]
            term = se.mul(comp, coeff)
            acc[rest] = acc.get(rest, se.ZERO) + (-term if s % 2 else term)
    return KForm(chart, omega.degree - 1, acc)


def pair(omega: KForm, X: VectorField) -> Expr:
    """omega(X) for a 1-form omega."""
    if omega.degree != 1:
        raise DegreeError("pairing needs a 1-form")
    return interior(X, omega).terms.get((), se.ZERO)


def lie_derivative_form(Y: VectorField, omega: KForm) -> KForm:
    """L_Y omega by Cartan's formula i_Y d(omega) + d(i_Y omega)."""
    chart = _same_chart(Y, omega)
    out = KForm(chart, omega.degree)
    d_omega = _d(omega)
    if d_omega is not None:
        out = out + interior(Y, d_omega)
    if omega.degree > 0:
        out = out + _d(interior(Y, omega))
    return out


def determinant(fields: Sequence[VectorField]) -> Expr:
    """Exact determinant of the component matrix of ``dim`` fields."""
    chart = _same_chart(*fields)
    if len(fields) != chart.dim:
        raise ValueError(f"need {chart.dim} fields, got {len(fields)}")
    rows = [f.components for f in fields]

    def det(rs: list[Sequence[Expr]], cols: tuple[int, ...]) -> Expr:
        if len(rs) == 1:
            return rs[0][cols[0]]
        terms = []
        for s, c in enumerate(cols):
            entry = rs[0][c]
            if entry == se.ZERO:
                continue
            minor = det(rs[1:], cols[:s] + cols[s + 1 :])
            term = se.mul(entry, minor)
            terms.append(-term if s % 2 else term)
        return se.add(*terms)

    return det(rows, tuple(range(chart.dim)))


RANK_RTOL = 1e-8
# a kept singular value this close to the cutoff makes the rank decision fragile
_AMBIGUITY_BAND = 1e-3


def _rank(mat: np.ndarray) -> tuple[int, bool]:
    """Numerical rank and whether the decision was clear-cut."""
    if mat.size == 0:
        return 0, True
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0.0:
        return 0, True
    cut = RANK_RTOL * s[0]
    r = int(np.sum(s > cut))
    clear = all(v > cut / _AMBIGUITY_BAND or v < cut * _AMBIGUITY_BAND for v in s)
    return r, clear


def _independent_subset(fields: Sequence[VectorField], p: Mapping[str, float]) -> list[int]:
    chosen: list[int] = []
    cols: list[np.ndarray] = []
    for i, f in enumerate(fields):
        v = f.evaluate(p)
        trial = np.column_stack(cols + [v])
        if _rank(trial)[0] > len(chosen):
            chosen.append(i)
            cols.append(v)
    return chosen


def _flag_at(generators: Sequence[VectorField], max_level: int, p) -> tuple[list[int], bool]:
    chart = _same_chart(*generators)
    pt = chart.point(p)
    level = list(generators)
    ranks: list[int] = []
    clear = True
    for depth in range(max_level + 1):
        mat = np.column_stack([f.evaluate(pt) for f in level]) if level else np.zeros((chart.dim, 0))
        r, ok = _rank(mat)
        clear = clear and ok
        ranks.append(r)
        if r == chart.dim or depth == max_level or (depth > 0 and r == ranks[-2]):
            break
        frame = [level[i] for i in _independent_subset(level, pt)]
        brackets = [lie_bracket(a, b) for a, b in itertools.combinations(frame, 2)]
        level = frame + brackets
    return ranks, clear


def derived_flag_ranks(
    generators: Sequence[VectorField],
    max_level: int,
    p=None,
    sampler: SampleSpec | None = None,
    resamples: int = 5,
) -> list[int]:
    """Ranks of D^(0), D^(1), ... at a point.

    Each level is a local frame of the previous one together with all pairwise
    brackets of that frame.  The sequence stops at full rank, at
    ``max_level``, or when a level adds nothing.  If the rank decision at ``p``
    is numerically fragile the point is resampled up to ``resamples`` times.
    """
    chart = _same_chart(*generators)
    sampler = sampler or chart.sampler()
    candidates = [] if p is None else [p]
    pts = chart.sample(sampler, stream=7, n=resamples)
    candidates.extend(pts)
    for q in candidates[: (1 if p is not None else 0) + resamples]:
        ranks, clear = _flag_at(generators, max_level, q)
        if clear:
            return ranks
    raise DegeneratePointError(
        f"rank profile unstable at {resamples} resampled points; override the sampling ranges"
    )


@dataclass
class FlagProfile:
    """Rank profiles of a distribution at several sampled points."""

    per_point: list[list[int]]
    profile: list[int]
    consistent: bool
    points: np.ndarray = field(repr=False)


def flag_profile(
    generators: Sequence[VectorField],
    max_level: int,
    sampler: SampleSpec | None = None,
    n_points: int = 5,
) -> FlagProfile:
    """Flag ranks at ``n_points`` sampled points; the maximum profile wins."""
    chart = _same_chart(*generators)
    sampler = sampler or chart.sampler()
    pts = chart.sample(sampler, stream=11, n=n_points)
    per_point = [_flag_at(generators, max_level, q)[0] for q in pts]
    profile = max(per_point, key=lambda r: (r[-1], r))
    consistent = all(r == per_point[0] for r in per_point)
    return FlagProfile(per_point, list(profile), consistent, pts)

"""Finite-dimensional Lie algebras of vector fields.

Linear dependence is always tested over *constant* real coefficients: a
candidate field is stacked over many sample points and reduced against the
current basis by a single least-squares solve.  Pointwise rank would instead
measure the span over smooth functions, which is the wrong notion for
Vessiot-Guldberg algebras.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ClosureError, IllConditionedError
from .geometry import Chart, VectorField, lie_bracket
from .symexpr import SampleSpec

DEPENDENCE_RTOL = 1e-8
ZERO_ATOL = 1e-10
# fixed so that golden tables stay bit-stable
SNAP_TOL = 1e-9
MAX_RESAMPLES = 5

_TRAIN_STREAM = 101
_VALID_STREAM = 202


def _stack(field_: VectorField, pts: np.ndarray) -> np.ndarray:
    return field_.evaluate_many(pts).reshape(-1)


class _Reducer:
    """Least-squares reduction of candidates against a growing basis."""

    def __init__(self, chart: Chart, sampler: SampleSpec, m: int, attempt: int = 0):
        self.chart = chart
        self.train = chart.sample(sampler, stream=_TRAIN_STREAM + 1000 * attempt, n=m)
        self.valid = chart.sample(sampler, stream=_VALID_STREAM + 1000 * attempt, n=m)
        self.cols_t: list[np.ndarray] = []
        self.cols_v: list[np.ndarray] = []

    def evaluate(self, f: VectorField) -> tuple[np.ndarray, np.ndarray]:
        return _stack(f, self.train), _stack(f, self.valid)

    def add(self, vt: np.ndarray, vv: np.ndarray) -> None:
        self.cols_t.append(vt)
        self.cols_v.append(vv)

    def residuals(self, vt: np.ndarray, vv: np.ndarray) -> tuple[np.ndarray, float, float]:
        if not self.cols_t:
            return np.zeros(0), 1.0, 1.0
        A = np.column_stack(self.cols_t)
        coeffs, *_ = np.linalg.lstsq(A, vt, rcond=None)
        r_t = np.linalg.norm(vt - A @ coeffs) / np.linalg.norm(vt)
        r_v = np.linalg.norm(vv - np.column_stack(self.cols_v) @ coeffs) / np.linalg.norm(vv)
        return coeffs, float(r_t), float(r_v)


def _is_zero_vec(vt: np.ndarray, vv: np.ndarray) -> bool:
    return float(np.max(np.abs(vt))) <= ZERO_ATOL and float(np.max(np.abs(vv))) <= ZERO_ATOL


def _classify(red: _Reducer, vt, vv) -> tuple[bool | None, np.ndarray]:
    """True if dependent, False if independent, None if the verdicts disagree."""
    if _is_zero_vec(vt, vv):
        return True, np.zeros(len(red.cols_t))
    coeffs, r_t, r_v = red.residuals(vt, vv)
    dep_t, dep_v = r_t <= DEPENDENCE_RTOL, r_v <= DEPENDENCE_RTOL
    if dep_t != dep_v:
        return None, coeffs
    return dep_t, coeffs


@dataclass
class LieBasis:
    """A basis of a finite-dimensional Lie algebra of vector fields.

    ``constants[i, j, k]`` is the coefficient of ``fields[k]`` in
    ``[fields[i], fields[j]]``.
    """

    fields: tuple[VectorField, ...]
    names: tuple[str, ...]
    constants: np.ndarray
    sampler: SampleSpec
    closed: bool = field(default=True, init=False)

    @property
    def dim(self) -> int:
        return len(self.fields)

    @property
    def chart(self) -> Chart:
        return self.fields[0].chart

    def table(self) -> dict[tuple[str, str], dict[str, float]]:
        return constants_to_table(self.constants, self.names)

    @classmethod
    def from_fields(
        cls,
        fields: Sequence[VectorField],
        names: Sequence[str] | None = None,
        sampler: SampleSpec | None = None,
    ) -> "LieBasis":
        """Wrap fields assumed to close, extracting their structure constants."""
        fields = tuple(fields)
        names = tuple(names) if names else tuple(f"B{i + 1}" for i in range(len(fields)))
        sampler = sampler or fields[0].chart.sampler()
        basis = cls(fields, names, np.zeros((len(fields),) * 3), sampler)
        basis.constants = structure_constants(basis)
        return basis


@dataclass
class NonClosureEvidence:
    """Bracket generation hit a cap before a depth level stopped adding fields.

    This corroborates, but never proves, infinite dimensionality.
    """

    dimension_per_depth: list[int]
    reason: str
    fields: tuple[VectorField, ...] = field(repr=False)
    closed: bool = field(default=False, init=False)

    @property
    def monotone(self) -> bool:
        d = self.dimension_per_depth
        return all(b > a for a, b in zip(d, d[1:]))


def close_under_brackets(
    generators: Sequence[VectorField],
    max_depth: int = 8,
    max_dim: int = 20,
    sampler: SampleSpec | None = None,
    names: Sequence[str] | None = None,
) -> LieBasis | NonClosureEvidence:
    """Breadth-first bracket closure of ``generators``.

    Returns a :class:`LieBasis` once a whole depth level adds nothing, or
    :class:`NonClosureEvidence` if ``max_depth`` or ``max_dim`` is exceeded.
    """
    if not generators:
        raise ValueError("need at least one generator")
    if max_dim < len(generators):
        raise ValueError("max_dim is smaller than the number of generators")
    chart = generators[0].chart
    sampler = sampler or chart.sampler()
    for attempt in range(MAX_RESAMPLES):
        try:
            return _close(generators, max_depth, max_dim, sampler, names, attempt)
        except _Ambiguous:
            continue
    raise IllConditionedError(
        f"dependence test ambiguous after {MAX_RESAMPLES} resamples; adjust sampling ranges"
    )


class _Ambiguous(Exception):
    pass


def _close(generators, max_depth, max_dim, sampler, names, attempt):
    chart = generators[0].chart
    red = _Reducer(chart, sampler, 3 * max_dim, attempt)
    basis: list[VectorField] = []
    labels: list[str] = []
    gen_names = list(names) if names else [f"X{i + 1}" for i in range(len(generators))]

    def offer(f: VectorField, label: str) -> bool:
        vt, vv = red.evaluate(f)
        dep, _ = _classify(red, vt, vv)
        if dep is None:
            raise _Ambiguous
        if dep:
            return False
        red.add(vt, vv)
        basis.append(f)
        labels.append(label)
        return True

    for g, nm in zip(generators, gen_names):
        offer(g, nm)
    dims = [len(basis)]
    frontier_start = 0
    for depth in range(1, max_depth + 1):
        level_start = len(basis)
        for i, j in itertools.combinations(range(level_start), 2):
            if j < frontier_start:
                continue  # both old: bracket already offered at an earlier depth
            if offer(lie_bracket(basis[i], basis[j]), f"[{labels[i]},{labels[j]}]"):
                if len(basis) > max_dim:
                    dims.append(len(basis))
                    return NonClosureEvidence(dims, "max_dim", tuple(basis))
        dims.append(len(basis))
        if len(basis) == level_start:
            b = LieBasis(tuple(basis), tuple(labels), np.zeros((len(basis),) * 3), sampler)
            b.constants = structure_constants(b)
            return b
        frontier_start = level_start
    return NonClosureEvidence(dims, "max_depth", tuple(basis))


def _snap(c: np.ndarray) -> np.ndarray:
    c = c.copy()
    c[np.abs(c) < SNAP_TOL] = 0.0
    c[np.abs(c - 1.0) < SNAP_TOL] = 1.0
    c[np.abs(c + 1.0) < SNAP_TOL] = -1.0
    return c


def structure_constants(basis: LieBasis) -> np.ndarray:
    """Structure constants of a closed basis, snapped near 0 and +-1."""
    d = basis.dim
    red = _Reducer(basis.chart, basis.sampler, max(3 * d, basis.sampler.n))
    for f in basis.fields:
        red.add(*red.evaluate(f))
    A_t = np.column_stack(red.cols_t)
    A_v = np.column_stack(red.cols_v)
    if np.linalg.matrix_rank(A_t) < d:
        raise ClosureError("basis fields are linearly dependent over the reals")
    c = np.zeros((d, d, d))
    for i, j in itertools.combinations(range(d), 2):
        br = lie_bracket(basis.fields[i], basis.fields[j])
        vt, vv = red.evaluate(br)
        if _is_zero_vec(vt, vv):
            continue
        coeffs, *_ = np.linalg.lstsq(A_t, vt, rcond=None)
        scale = max(np.linalg.norm(vv), 1.0)
        r_v = np.linalg.norm(vv - A_v @ coeffs) / scale
        if r_v > DEPENDENCE_RTOL:
            raise ClosureError(
                f"[{basis.names[i]},{basis.names[j]}] is not in the span (residual {r_v:.3e})"
            )
        c[i, j] = coeffs
        c[j, i] = -coeffs
    return _snap(c)


def constants_to_table(c: np.ndarray, names: Sequence[str]) -> dict[tuple[str, str], dict[str, float]]:
    table = {}
    for i, j in itertools.combinations(range(len(names)), 2):
        row = {names[k]: float(c[i, j, k]) for k in range(len(names)) if c[i, j, k] != 0.0}
        if row:
            table[(names[i], names[j])] = row
    return table


def table_to_constants(table: Mapping, names: Sequence[str]) -> np.ndarray:
    """Dense constants from a sparse ``{(a, b): {c: coeff}}`` table.

    Keys may be names or 0-based indices; missing pairs are zero brackets.
    """
    idx = {n: i for i, n in enumerate(names)}

    def ix(k):
        return k if isinstance(k, (int, np.integer)) else idx[k]

    d = len(names)
    c = np.zeros((d, d, d))
    for (a, b), row in table.items():
        i, j = ix(a), ix(b)
        for k, v in row.items():
            c[i, j, ix(k)] += v
            c[j, i, ix(k)] -= v
    if not np.allclose(c, -np.swapaxes(c, 0, 1)):
        raise ValueError("table is not antisymmetric")
    return c


@dataclass
class PairCheck:
    label: str
    residual: float
    passed: bool


@dataclass
class TableReport:
    entries: list[PairCheck]
    tol: float

    @property
    def max_residual(self) -> float:
        return max((e.residual for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failures(self) -> list[str]:
        return [e.label for e in self.entries if not e.passed]


def verify_table(
    basis: Sequence[VectorField],
    expected,
    sampler: SampleSpec | None = None,
    names: Sequence[str] | None = None,
    tol: float = 1e-9,
) -> TableReport:
    """Check every bracket of ``basis`` against an expected constants table.

    ``expected`` is a dense ``(d, d, d)`` array or a sparse table as accepted
    by :func:`table_to_constants`.
    """
    basis = list(basis)
    names = tuple(names) if names else tuple(f"B{i + 1}" for i in range(len(basis)))
    c = np.asarray(expected, dtype=float) if not isinstance(expected, Mapping) else table_to_constants(expected, names)
    if not np.allclose(c, -np.swapaxes(c, 0, 1)):
        raise ValueError("expected table is not antisymmetric")
    sampler = sampler or basis[0].chart.sampler()
    entries = []
    for i, j in itertools.combinations(range(len(basis)), 2):
        resid = lie_bracket(basis[i], basis[j])
        for k, f in enumerate(basis):
            if c[i, j, k] != 0.0:
                resid = resid - c[i, j, k] * f
        r = resid.max_abs(sampler)
        entries.append(PairCheck(f"[{names[i]},{names[j]}]", r, r <= tol))
    return TableReport(entries, tol)


def jacobi_defect(c: np.ndarray) -> float:
    """Largest violation of the Jacobi identity by structure constants."""
    # [[e_i,e_j],e_k] = c_ij^m c_mk^l e_l
    t = np.einsum("ijm,mkl->ijkl", c, c)
    cyc = t + np.transpose(t, (1, 2, 0, 3)) + np.transpose(t, (2, 0, 1, 3))
    return float(np.max(np.abs(cyc))) if c.size else 0.0

"""Exact expression trees over named coordinates.

Trees are division-free: constants, coordinates, negation, sums, products,
positive integer powers, ``sin`` and ``cos``.  The module-level constructors
(:func:`add`, :func:`mul`, ...) fold constants and collect like terms so that
repeated Lie brackets do not swell without bound; the raw :class:`Expr`
constructor performs no rewriting at all.

Identity testing is probabilistic: :func:`is_zero` evaluates an expression at
seeded random points instead of reducing it to a canonical form.
"""

from __future__ import annotations

import math
import weakref
import zlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import MissingCoordinateError

CONST = "const"
COORD = "coord"
NEG = "neg"
ADD = "add"
MUL = "mul"
POW = "pow"
SIN = "sin"
COS = "cos"

KINDS = (CONST, COORD, NEG, ADD, MUL, POW, SIN, COS)
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}


_INTERN: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


def _stable_str_hash(s: str) -> int:
    # str hashes are salted per process; tree hashes drive term ordering
    return zlib.crc32(s.encode("utf-8"))


class Expr:
    """Immutable, hash-consed expression node.

    ``value`` holds the float of a constant, the name of a coordinate or the
    exponent of a power node, and is ``None`` otherwise.  Structurally equal
    trees are the same object, so equality is identity.
    """

    __slots__ = ("kind", "args", "value", "_hash", "coords", "_dcache", "__weakref__")

    def __new__(cls, kind: str, args: Sequence["Expr"] = (), value=None):
        if kind not in _KIND_CODE:
            raise ValueError(f"unknown node kind {kind!r}")
        args = tuple(args)
        if kind == CONST:
            value = float(value)
        elif kind == COORD:
            if not isinstance(value, str) or not value:
                raise ValueError("coordinate nodes need a non-empty name")
        elif kind == POW:
            value = int(value)
            if value < 1:
                raise ValueError("power exponents must be >= 1")
            if len(args) != 1:
                raise ValueError("power nodes take exactly one base")
        elif kind in (NEG, SIN, COS) and len(args) != 1:
            raise ValueError(f"{kind} nodes take exactly one argument")
        elif kind in (ADD, MUL) and not args:
            raise ValueError(f"{kind} nodes need at least one argument")
        for a in args:
            if not isinstance(a, Expr):
                raise TypeError("node arguments must be Expr instances")
        # children are interned, so their ids identify them while this key lives
        key = (kind, value, tuple(map(id, args)))
        hit = _INTERN.get(key)
        if hit is not None:
            return hit
        self = object.__new__(cls)
        setattr_ = object.__setattr__
        setattr_(self, "kind", kind)
        setattr_(self, "args", args)
        setattr_(self, "value", value)
        if kind == COORD:
            payload = _stable_str_hash(value)
            coords = frozenset((value,))
        else:
            payload = 0 if value is None else hash(value)  # hash(None) is address-based
            coords = frozenset().union(*(a.coords for a in args)) if args else frozenset()
        setattr_(self, "coords", coords)
        setattr_(self, "_hash", hash((_KIND_CODE[kind], payload) + tuple(a._hash for a in args)))
        setattr_(self, "_dcache", {})
        _INTERN[key] = self
        return self

    def __reduce__(self):
        return (Expr, (self.kind, self.args, self.value))

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __ne__(self, other):
        return self is not other

    # arithmetic sugar; all routes go through the folding constructors
    def __add__(self, other):
        other = _coerce(other)
        return NotImplemented if other is None else add(self, other)

    def __radd__(self, other):
        other = _coerce(other)
        return NotImplemented if other is None else add(other, self)

    def __sub__(self, other):
        other = _coerce(other)
        return NotImplemented if other is None else add(self, neg(other))

    def __rsub__(self, other):
        other = _coerce(other)
        return NotImplemented if other is None else add(other, neg(self))

    def __mul__(self, other):
        other = _coerce(other)
        return NotImplemented if other is None else mul(self, other)

    def __rmul__(self, other):
        other = _coerce(other)
        return NotImplemented if other is None else mul(other, self)

    def __neg__(self):
        return neg(self)

    def __pos__(self):
        return self

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
            raise TypeError("only integer exponents are supported")
        return power(self, int(k))

    @property
    def is_constant(self) -> bool:
        return self.kind == CONST

    def size(self) -> int:
        return 1 + sum(a.size() for a in self.args)

    def __repr__(self):
        return f"Expr({to_string(self)})"

    def __str__(self):
        return to_string(self)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool):
        return const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _coerce(x) -> Expr | None:
    try:
        return as_expr(x)
    except TypeError:
        return None


def const(v: float) -> Expr:
    v = float(v)
    if v == 0.0:
        v = 0.0  # drop negative zero
    return Expr(CONST, value=v)


def coord(name: str) -> Expr:
    return Expr(COORD, value=name)


def coords(*names: str) -> tuple[Expr, ...]:
    return tuple(coord(n) for n in names)


ZERO = const(0.0)
ONE = const(1.0)


def _split_coeff(e: Expr) -> tuple[float, Expr]:
    """Write ``e`` as ``c * core`` with a numeric ``c``."""
    if e.kind == CONST:
        return e.value, ONE
    if e.kind == NEG:
        c, core = _split_coeff(e.args[0])
        return -c, core
    if e.kind == MUL and e.args[0].kind == CONST:
        rest = e.args[1:]
        return e.args[0].value, rest[0] if len(rest) == 1 else Expr(MUL, rest)
    return 1.0, e


def _scaled(c: float, core: Expr) -> Expr:
    if c == 0.0:
        return ZERO
    if core == ONE:
        return const(c)
    if c == 1.0:
        return core
    if c == -1.0:
        return Expr(NEG, (core,))
    if core.kind == MUL:
        return Expr(MUL, (const(c),) + core.args)
    return Expr(MUL, (const(c), core))


def _sort_key(e: Expr):
    return e._hash


def neg(e: Expr) -> Expr:
    e = as_expr(e)
    c, core = _split_coeff(e)
    return _scaled(-c, core)


def add(*terms) -> Expr:
    flat: list[Expr] = []
    stack = [as_expr(t) for t in reversed(terms)]
    while stack:
        t = stack.pop()
        if t.kind == ADD:
            stack.extend(reversed(t.args))
        else:
            flat.append(t)
    constant = 0.0
    collected: dict[Expr, float] = {}
    for t in flat:
        c, core = _split_coeff(t)
        if core == ONE:
            constant += c
        elif core.kind == ADD:
            # a scaled sum: distribute the scalar over its terms
            for sub in core.args:
                sc, score = _split_coeff(sub)
                if score == ONE:
                    constant += c * sc
                else:
                    collected[score] = collected.get(score, 0.0) + c * sc
        else:
            collected[core] = collected.get(core, 0.0) + c
    out = [_scaled(c, core) for core, c in collected.items() if c != 0.0]
    out.sort(key=_sort_key)
    if constant != 0.0:
        out.insert(0, const(constant))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return Expr(ADD, out)


def mul(*factors) -> Expr:
    coeff = 1.0
    powers: dict[Expr, int] = {}
    stack = [as_expr(f) for f in reversed(factors)]
    while stack:
        f = stack.pop()
        if f.kind == MUL:
            stack.extend(reversed(f.args))
        elif f.kind == CONST:
            coeff *= f.value
        elif f.kind == NEG:
            c, core = _split_coeff(f)
            coeff *= c
            if core != ONE:
                stack.append(core)
        else:
            base, k = (f.args[0], f.value) if f.kind == POW else (f, 1)
            powers[base] = powers.get(base, 0) + k
    if coeff == 0.0:
        return ZERO
    parts = [(b if k == 1 else Expr(POW, (b,), k)) for b, k in powers.items()]
    parts.sort(key=_sort_key)
    if not parts:
        return const(coeff)
    core = parts[0] if len(parts) == 1 else Expr(MUL, parts)
    return _scaled(coeff, core)


def power(base, k: int) -> Expr:
    base = as_expr(base)
    k = int(k)
    if k < 0:
        raise ValueError("negative exponents are not representable")
    if k == 0:
        return ONE
    if k == 1:
        return base
    if base.kind == CONST:
        return const(base.value**k)
    if base.kind == POW:
        return Expr(POW, base.args, base.value * k)
    c, core = _split_coeff(base)
    if c != 1.0:
        return mul(const(c**k), power(core, k))
    if core.kind == MUL:
        return mul(*(power(f, k) for f in core.args))
    return Expr(POW, (core,), k)


def sin(arg) -> Expr:
    arg = as_expr(arg)
    if arg.kind == CONST:
        return const(math.sin(arg.value))
    c, core = _split_coeff(arg)
    if c < 0:
        return neg(Expr(SIN, (_scaled(-c, core),)))
    return Expr(SIN, (arg,))


def cos(arg) -> Expr:
    arg = as_expr(arg)
    if arg.kind == CONST:
        return const(math.cos(arg.value))
    c, core = _split_coeff(arg)
    if c < 0:
        return Expr(COS, (_scaled(-c, core),))
    return Expr(COS, (arg,))


def rebuild(e: Expr) -> Expr:
    """Re-create ``e`` through the folding constructors."""
    memo: dict[int, Expr] = {}

    def go(n: Expr) -> Expr:
        key = id(n)
        if key in memo:
            return memo[key]
        k = n.kind
        if k in (CONST, COORD):
            out = n
        else:
            a = [go(x) for x in n.args]
            out = {
                NEG: lambda: neg(a[0]),
                ADD: lambda: add(*a),
                MUL: lambda: mul(*a),
                POW: lambda: power(a[0], n.value),
                SIN: lambda: sin(a[0]),
                COS: lambda: cos(a[0]),
            }[k]()
        memo[key] = out
        return out

    return go(e)


def differentiate(e: Expr, q: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to coordinate ``q``.

    Results are cached on the nodes, so repeated brackets over shared
    subtrees reuse earlier work.
    """

    def d(n: Expr) -> Expr:
        if q not in n.coords:
            return ZERO
        hit = n._dcache.get(q)
        if hit is not None:
            return hit
        k = n.kind
        if k == COORD:
            out = ONE
        elif k == NEG:
            out = neg(d(n.args[0]))
        elif k == ADD:
            out = add(*(d(t) for t in n.args))
        elif k == MUL:
            terms = []
            for i, f in enumerate(n.args):
                if q in f.coords:
                    terms.append(mul(*n.args[:i], d(f), *n.args[i + 1 :]))
            out = add(*terms)
        elif k == POW:
            b = n.args[0]
            out = mul(const(n.value), power(b, n.value - 1), d(b))
        elif k == SIN:
            out = mul(cos(n.args[0]), d(n.args[0]))
        else:
            out = neg(mul(sin(n.args[0]), d(n.args[0])))
        n._dcache[q] = out
        return out

    return d(as_expr(e))


def substitute(e: Expr, values: Mapping[str, Expr | float]) -> Expr:
    """Replace coordinates by expressions, refolding on the way up."""
    repl = {k: as_expr(v) for k, v in values.items()}
    memo: dict[int, Expr] = {}

    def go(n: Expr) -> Expr:
        if not (n.coords & repl.keys()):
            return n
        key = id(n)
        if key in memo:
            return memo[key]
        if n.kind == COORD:
            out = repl[n.value]
        else:
            a = [go(x) for x in n.args]
            out = {
                NEG: lambda: neg(a[0]),
                ADD: lambda: add(*a),
                MUL: lambda: mul(*a),
                POW: lambda: power(a[0], n.value),
                SIN: lambda: sin(a[0]),
                COS: lambda: cos(a[0]),
            }[n.kind]()
        memo[key] = out
        return out

    return go(as_expr(e))


def evaluate(e: Expr, point: Mapping[str, float]):
    """Evaluate ``e`` at ``point``.

    Point values may be floats or equally-shaped numpy arrays; in the latter
    case the result is an array of the same shape.
    """
    memo: dict[int, object] = {}

    def ev(n: Expr):
        key = id(n)
        if key in memo:
            return memo[key]
        k = n.kind
        if k == CONST:
            out = n.value
        elif k == COORD:
            try:
                out = point[n.value]
            except KeyError:
                raise MissingCoordinateError(n.value) from None
        elif k == NEG:
            out = -ev(n.args[0])
        elif k == ADD:
            out = ev(n.args[0])
            for t in n.args[1:]:
                out = out + ev(t)
        elif k == MUL:
            out = ev(n.args[0])
            for t in n.args[1:]:
                out = out * ev(t)
        elif k == POW:
            out = ev(n.args[0]) ** n.value
        elif k == SIN:
            out = np.sin(ev(n.args[0]))
        else:
            out = np.cos(ev(n.args[0]))
        memo[key] = out
        return out

    out = ev(as_expr(e))
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class SampleSpec:
    """Seeded sampling recipe for probabilistic identity tests.

    ``ranges`` maps coordinate names to half-open intervals; coordinates not
    listed are drawn from ``default_range``.  Each coordinate gets its own
    random stream derived from ``(seed, stream, name)``, so the points drawn
    for one coordinate do not depend on which others appear.
    """

    seed: int = 0
    n: int = 25
    ranges: tuple[tuple[str, float, float], ...] = ()
    default_range: tuple[float, float] = (-2.0, 2.0)

    def range_of(self, name: str) -> tuple[float, float]:
        for nm, lo, hi in self.ranges:
            if nm == name:
                return lo, hi
        return self.default_range

    def values(self, name: str, stream: int = 0, n: int | None = None) -> np.ndarray:
        lo, hi = self.range_of(name)
        rng = np.random.default_rng([self.seed, stream, _stable_str_hash(name)])
        return rng.uniform(lo, hi, self.n if n is None else n)

    def points(self, names, stream: int = 0, n: int | None = None) -> dict[str, np.ndarray]:
        return {nm: self.values(nm, stream, n) for nm in names}

    def with_seed(self, seed: int) -> "SampleSpec":
        return SampleSpec(seed, self.n, self.ranges, self.default_range)

    def with_n(self, n: int) -> "SampleSpec":
        return SampleSpec(self.seed, n, self.ranges, self.default_range)


DEFAULT_SAMPLER = SampleSpec()
DEFAULT_TOL = 1e-9


def max_abs(e: Expr, sampler: SampleSpec | None = None, stream: int = 0) -> float:
    """Largest absolute value of ``e`` over the sample points."""
    sampler = sampler or DEFAULT_SAMPLER
    e = as_expr(e)
    if e.kind == CONST:
        return abs(e.value)
    vals = evaluate(e, sampler.points(sorted(e.coords), stream))
    return float(np.max(np.abs(vals)))


def is_zero(e: Expr, sampler: SampleSpec | None = None, tol: float = DEFAULT_TOL) -> bool:
    """True iff ``|e| <= tol`` at every sampled point."""
    return max_abs(e, sampler) <= tol


_PREC = {ADD: 1, NEG: 2, MUL: 3, POW: 4}


def to_string(e: Expr) -> str:
    def s(n: Expr, outer: int = 0) -> str:
        k = n.kind
        if k == CONST:
            v = n.value
            txt = repr(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
            return f"({txt})" if v < 0 and outer > 1 else txt
        if k == COORD:
            return n.value
        if k in (SIN, COS):
            return f"{k}({s(n.args[0])})"
        if k == NEG:
            txt = "-" + s(n.args[0], _PREC[MUL])
        elif k == ADD:
            parts = [s(n.args[0], 1)]
            for t in n.args[1:]:
                txt_t = s(t, 1)
                parts.append(f"- {txt_t[1:]}" if txt_t.startswith("-") else f"+ {txt_t}")
            txt = " ".join(parts)
        elif k == MUL:
            txt = "*".join(s(f, _PREC[MUL]) for f in n.args)
        else:
            txt = f"{s(n.args[0], _PREC[POW] + 1)}**{n.value}"
        return f"({txt})" if outer > _PREC[k] else txt

    return s(e)

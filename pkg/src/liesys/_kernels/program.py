"""Flat postfix encoding of expression lists, shared by both backends.

Each instruction is an ``(op, arg)`` pair.  ``arg`` indexes ``consts`` for
``OP_CONST``, the state vector for ``OP_COORD``, and holds the arity for
``OP_ADD``/``OP_MUL`` or the exponent for ``OP_POW``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import symexpr as se

OP_CONST, OP_COORD, OP_NEG, OP_ADD, OP_MUL, OP_POW, OP_SIN, OP_COS = range(8)

CTRL_CONSTANT, CTRL_SINUSOID, CTRL_POLYNOMIAL = range(3)


@dataclass(eq=False)
class Program:
    ops: np.ndarray  # int32
    args: np.ndarray  # int64
    consts: np.ndarray  # float64
    starts: np.ndarray  # int64, len nexpr + 1
    nvars: int
    stack_size: int
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def nexpr(self) -> int:
        return len(self.starts) - 1


def compile_exprs(exprs: Sequence[se.Expr], names: Sequence[str]) -> Program:
    index = {n: i for i, n in enumerate(names)}
    ops: list[int] = []
    args: list[int] = []
    consts: list[float] = []
    const_ix: dict[float, int] = {}
    starts = [0]
    max_depth = 1

    def emit(e: se.Expr) -> int:
        """Append code for ``e``; return the stack depth it needs."""
        k = e.kind
        if k == se.CONST:
            if e.value not in const_ix:
                const_ix[e.value] = len(consts)
                consts.append(e.value)
            ops.append(OP_CONST)
            args.append(const_ix[e.value])
            return 1
        if k == se.COORD:
            if e.value not in index:
                raise se.MissingCoordinateError(e.value)
            ops.append(OP_COORD)
            args.append(index[e.value])
            return 1
        if k in (se.ADD, se.MUL):
            need = 0
            for pos, a in enumerate(e.args):
                need = max(need, pos + emit(a))
            ops.append(OP_ADD if k == se.ADD else OP_MUL)
            args.append(len(e.args))
            return need
        need = emit(e.args[0])
        ops.append({se.NEG: OP_NEG, se.POW: OP_POW, se.SIN: OP_SIN, se.COS: OP_COS}[k])
        args.append(e.value if k == se.POW else 0)
        return need

    for e in exprs:
        max_depth = max(max_depth, emit(se.as_expr(e)))
        starts.append(len(ops))
    return Program(
        ops=np.asarray(ops, dtype=np.int32),
        args=np.asarray(args, dtype=np.int64),
        consts=np.asarray(consts if consts else [0.0], dtype=np.float64),
        starts=np.asarray(starts, dtype=np.int64),
        nvars=len(names),
        stack_size=max_depth,
    )


@dataclass(eq=False)
class ControlTable:
    """Control signals packed as ``kinds``, ``params`` and ``pstart`` offsets.

    constant: ``[c]``; sinusoid: ``[amplitude, omega, phase, offset]``;
    polynomial: ascending coefficients.
    """

    kinds: np.ndarray  # int32
    params: np.ndarray  # float64
    pstart: np.ndarray  # int64, len nctrl + 1

    @property
    def n(self) -> int:
        return len(self.kinds)


def pack_controls(specs: Sequence[tuple[int, Sequence[float]]]) -> ControlTable:
    kinds, params, pstart = [], [], [0]
    for kind, p in specs:
        kinds.append(kind)
        params.extend(float(v) for v in p)
        pstart.append(len(params))
    return ControlTable(
        np.asarray(kinds, dtype=np.int32),
        np.asarray(params if params else [0.0], dtype=np.float64),
        np.asarray(pstart, dtype=np.int64),
    )


@dataclass(eq=False)
class System:
    """``dx/dt = sum_j b_j(t) X_j(x)`` as a program with ``nterms * dim`` exprs.

    Expression ``j * dim + i`` is component ``i`` of field ``j``.
    """

    program: Program
    controls: ControlTable
    dim: int

    @property
    def nterms(self) -> int:
        return self.controls.n

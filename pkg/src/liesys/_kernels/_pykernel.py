"""Pure-Python backend.

Programs are turned back into Python source once and compiled with
``math`` (scalar paths) or ``numpy`` (batched evaluation) bound to the
function names.  Arithmetic order matches the compiled backend.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NonFiniteStateError, StepUnderflowError
from . import dopri_tableau as tab
from .program import (
    CTRL_CONSTANT,
    CTRL_POLYNOMIAL,
    CTRL_SINUSOID,
    OP_ADD,
    OP_CONST,
    OP_COORD,
    OP_COS,
    OP_MUL,
    OP_NEG,
    OP_POW,
    OP_SIN,
    ControlTable,
    Program,
    System,
)

NAME = "python"


def _sources(prog: Program) -> list[str]:
    out = []
    consts = prog.consts
    for e in range(prog.nexpr):
        stack: list[str] = []
        for k in range(prog.starts[e], prog.starts[e + 1]):
            op, a = int(prog.ops[k]), int(prog.args[k])
            if op == OP_CONST:
                stack.append(repr(float(consts[a])))
            elif op == OP_COORD:
                stack.append(f"x{a}")
            elif op == OP_NEG:
                stack.append(f"(-{stack.pop()})")
            elif op in (OP_ADD, OP_MUL):
                parts = stack[-a:]
                del stack[-a:]
                sym = " + " if op == OP_ADD else " * "
                stack.append("(" + sym.join(parts) + ")")
            elif op == OP_POW:
                stack.append(f"({stack.pop()} ** {a})")
            elif op == OP_SIN:
                stack.append(f"_sin({stack.pop()})")
            elif op == OP_COS:
                stack.append(f"_cos({stack.pop()})")
        out.append(stack[0])
    return out


def _unpack(nvars: int) -> str:
    if nvars == 0:
        return ""
    names = ", ".join(f"x{i}" for i in range(nvars))
    return f"    {names}, = x\n"


def _build(prog: Program, src: str, name: str, vector: bool):
    ns = {"_sin": np.sin if vector else math.sin, "_cos": np.cos if vector else math.cos, "inf": math.inf}
    exec(compile(src, f"<liesys:{name}>", "exec"), ns)
    return ns[name]


def _expr_fn(prog: Program, vector: bool):
    key = ("expr", vector)
    if key not in prog.cache:
        body = ", ".join(_sources(prog))
        src = f"def _f(x):\n{_unpack(prog.nvars)}    return ({body},)\n"
        prog.cache[key] = _build(prog, src, "_f", vector)
    return prog.cache[key]


def _rhs_fn(sys_: System):
    prog = sys_.program
    key = ("rhs", sys_.dim)
    if key not in prog.cache:
        exprs = _sources(prog)
        dim = sys_.dim
        rows = []
        for i in range(dim):
            acc = "0.0"
            for j in range(sys_.nterms):
                acc = f"({acc} + c[{j}] * {exprs[j * dim + i]})"
            rows.append(acc)
        # math.pow raises where C's pow returns inf; keep the two backends alike
        body = f"    return [{', '.join(rows)}]\n"
        src = (
            f"def _rhs(x, c):\n{_unpack(prog.nvars)}    try:\n    {body}"
            f"    except OverflowError:\n        return [inf] * {dim}\n"
        )
        prog.cache[key] = _build(prog, src, "_rhs", False)
    return prog.cache[key]


def control_values(ctrl: ControlTable, t: float) -> list[float]:
    out = []
    for j in range(ctrl.n):
        p = ctrl.params[ctrl.pstart[j] : ctrl.pstart[j + 1]]
        kind = ctrl.kinds[j]
        if kind == CTRL_CONSTANT:
            out.append(float(p[0]))
        elif kind == CTRL_SINUSOID:
            out.append(float(p[3]) + float(p[0]) * math.sin(float(p[1]) * t + float(p[2])))
        elif kind == CTRL_POLYNOMIAL:
            v = 0.0
            for coef in reversed(p):
                v = v * t + float(coef)
            out.append(v)
        else:  # pragma: no cover - packing guards the kinds
            raise ValueError(f"unknown control kind {kind}")
    return out


def eval_points(prog: Program, pts: np.ndarray) -> np.ndarray:
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    f = _expr_fn(prog, vector=True)
    cols = f(tuple(pts[:, i] for i in range(prog.nvars)))
    out = np.empty((pts.shape[0], prog.nexpr))
    for k, col in enumerate(cols):
        out[:, k] = col
    return out


def rhs(sys_: System, t: float, x) -> np.ndarray:
    return np.asarray(_rhs_fn(sys_)(list(map(float, x)), control_values(sys_.controls, t)))


def _finite(x) -> bool:
    return all(math.isfinite(v) for v in x)


def rk4(sys_: System, x0, t0: float, h: float, nsteps: int) -> np.ndarray:
    f = _rhs_fn(sys_)
    ctrl = sys_.controls
    dim = sys_.dim
    out = np.empty((nsteps + 1, dim))
    x = [float(v) for v in x0]
    out[0] = x
    half = 0.5 * h
    sixth = h / 6.0
    for n in range(nsteps):
        t = t0 + n * h
        k1 = f(x, control_values(ctrl, t))
        cm = control_values(ctrl, t + half)
        k2 = f([x[i] + half * k1[i] for i in range(dim)], cm)
        k3 = f([x[i] + half * k2[i] for i in range(dim)], cm)
        k4 = f([x[i] + h * k3[i] for i in range(dim)], control_values(ctrl, t + h))
        x = [x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(dim)]
        if not _finite(x):
            raise NonFiniteStateError(f"state became non-finite at t={t0 + (n + 1) * h:.6g}")
        out[n + 1] = x
    return out


def dopri(sys_: System, x0, t0: float, t1: float, rtol: float, atol: float, h0: float, hmax: float):
    f = _rhs_fn(sys_)
    ctrl = sys_.controls
    dim = sys_.dim
    A, C, B, E = tab.A, tab.C, tab.B, tab.E
    x = [float(v) for v in x0]
    t = t0
    k = [f(x, control_values(ctrl, t))] + [None] * 6
    ts, xs, ks = [t], [list(x)], [list(k[0])]
    h = min(h0, hmax, t1 - t0)
    while t < t1:
        if t + h >= t1 or t + 1.01 * h >= t1:
            h = t1 - t
        if h <= 10.0 * tab.EPS * max(abs(t), 1.0):
            raise StepUnderflowError(f"step size underflow at t={t:.6g}")
        for s in range(1, 7):
            y = [x[i] + h * sum(A[s][m] * k[m][i] for m in range(s)) for i in range(dim)]
            k[s] = f(y, control_values(ctrl, t + C[s] * h))
        # row 6 of A is the 5th-order solution (first same as last)
        xnew = y
        err = 0.0
        for i in range(dim):
            ei = h * sum(E[m] * k[m][i] for m in range(7))
            sc = atol + rtol * max(abs(x[i]), abs(xnew[i]))
            err += (ei / sc) ** 2
        err = math.sqrt(err / dim)
        if not math.isfinite(err):
            raise NonFiniteStateError(f"state became non-finite near t={t:.6g}")
        if err <= 1.0:
            t = t1 if h == t1 - t else t + h
            x = xnew
            k[0] = k[6]
            ts.append(t)
            xs.append(list(x))
            ks.append(list(k[0]))
            fac = tab.FAC_MAX if err == 0.0 else min(tab.FAC_MAX, max(tab.FAC_MIN, tab.SAFETY * err**-0.2))
        else:
            fac = max(tab.FAC_MIN, tab.SAFETY * err**-0.2)
        h = min(h * fac, hmax)
    return np.asarray(ts), np.asarray(xs), np.asarray(ks)

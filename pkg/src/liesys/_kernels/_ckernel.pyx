# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backend: stack-machine evaluation and explicit RK drivers."""

import numpy as np

from libc.math cimport sin, cos, pow, sqrt, fabs, isfinite
from libc.stdlib cimport malloc, free

from ..errors import NonFiniteStateError, StepUnderflowError
from . import dopri_tableau as _tab

NAME = "cython"

cdef enum:
    OP_CONST = 0
    OP_COORD = 1
    OP_NEG = 2
    OP_ADD = 3
    OP_MUL = 4
    OP_POW = 5
    OP_SIN = 6
    OP_COS = 7

cdef enum:
    CTRL_CONSTANT = 0
    CTRL_SINUSOID = 1
    CTRL_POLYNOMIAL = 2

cdef double DA[7][7]
cdef double DC[7]
cdef double DE[7]
cdef double SAFETY = _tab.SAFETY
cdef double FAC_MIN = _tab.FAC_MIN
cdef double FAC_MAX = _tab.FAC_MAX
cdef double EPS = _tab.EPS

for _s in range(7):
    DC[_s] = _tab.C[_s]
    DE[_s] = _tab.E[_s]
    for _m in range(7):
        DA[_s][_m] = _tab.A[_s][_m] if _m < len(_tab.A[_s]) else 0.0


cdef struct Prog:
    const int* ops
    const long long* args
    const double* consts
    const long long* starts
    int nexpr


cdef struct Ctrl:
    const int* kinds
    const double* params
    const long long* pstart
    int n


cdef inline double eval_one(Prog* p, int e, const double* x, double* stack) noexcept nogil:
    cdef long long k, a, i
    cdef int op
    cdef int sp = 0
    cdef double acc, b
    for k in range(p.starts[e], p.starts[e + 1]):
        op = p.ops[k]
        a = p.args[k]
        if op == OP_CONST:
            stack[sp] = p.consts[a]
            sp += 1
        elif op == OP_COORD:
            stack[sp] = x[a]
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_ADD:
            acc = stack[sp - a]
            for i in range(sp - a + 1, sp):
                acc = acc + stack[i]
            sp -= <int>a
            stack[sp] = acc
            sp += 1
        elif op == OP_MUL:
            acc = stack[sp - a]
            for i in range(sp - a + 1, sp):
                acc = acc * stack[i]
            sp -= <int>a
            stack[sp] = acc
            sp += 1
        elif op == OP_POW:
            b = stack[sp - 1]
            stack[sp - 1] = pow(b, <double>a)
        elif op == OP_SIN:
            stack[sp - 1] = sin(stack[sp - 1])
        else:
            stack[sp - 1] = cos(stack[sp - 1])
    return stack[0]


cdef inline double ctrl_value(Ctrl* c, int j, double t) noexcept nogil:
    cdef const double* p = c.params + c.pstart[j]
    cdef long long m = c.pstart[j + 1] - c.pstart[j]
    cdef long long i
    cdef double v
    cdef int kind = c.kinds[j]
    if kind == CTRL_CONSTANT:
        return p[0]
    elif kind == CTRL_SINUSOID:
        return p[3] + p[0] * sin(p[1] * t + p[2])
    v = 0.0
    i = m - 1
    while i >= 0:
        v = v * t + p[i]
        i -= 1
    return v


cdef inline void rhs_c(Prog* p, Ctrl* c, int dim, double t, const double* x,
                       double* out, double* cv, double* stack) noexcept nogil:
    cdef int i, j
    for j in range(c.n):
        cv[j] = ctrl_value(c, j, t)
    for i in range(dim):
        out[i] = 0.0
    for i in range(dim):
        for j in range(c.n):
            out[i] = out[i] + cv[j] * eval_one(p, j * dim + i, x, stack)


cdef inline bint all_finite(const double* x, int dim) noexcept nogil:
    cdef int i
    for i in range(dim):
        if not isfinite(x[i]):
            return False
    return True


cdef class _Bound:
    """Keeps C views of a System's arrays alive for the duration of a call."""
    cdef const int[::1] ops
    cdef const long long[::1] args
    cdef const double[::1] consts
    cdef const long long[::1] starts
    cdef const int[::1] kinds
    cdef const double[::1] params
    cdef const long long[::1] pstart
    cdef Prog prog
    cdef Ctrl ctrl
    cdef int dim
    cdef int stack_size

    def __init__(self, program, controls=None, int dim=0):
        self.ops = program.ops
        self.args = program.args
        self.consts = program.consts
        self.starts = program.starts
        self.prog.ops = &self.ops[0] if self.ops.shape[0] else NULL
        self.prog.args = &self.args[0] if self.args.shape[0] else NULL
        self.prog.consts = &self.consts[0]
        self.prog.starts = &self.starts[0]
        self.prog.nexpr = self.starts.shape[0] - 1
        self.stack_size = program.stack_size
        self.dim = dim
        if controls is not None:
            self.kinds = controls.kinds
            self.params = controls.params
            self.pstart = controls.pstart
            self.ctrl.kinds = &self.kinds[0] if self.kinds.shape[0] else NULL
            self.ctrl.params = &self.params[0]
            self.ctrl.pstart = &self.pstart[0]
            self.ctrl.n = self.kinds.shape[0]


def eval_points(program, pts):
    cdef _Bound b = _Bound(program)
    cdef double[:, ::1] X = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0]
    out_arr = np.empty((n, b.prog.nexpr))
    cdef double[:, ::1] out = out_arr
    cdef double* stack = <double*>malloc(b.stack_size * sizeof(double))
    cdef Py_ssize_t r
    cdef int e
    if stack == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(n):
                for e in range(b.prog.nexpr):
                    out[r, e] = eval_one(&b.prog, e, &X[r, 0] if X.shape[1] else NULL, stack)
    finally:
        free(stack)
    return out_arr


def rhs(system, double t, x):
    cdef _Bound b = _Bound(system.program, system.controls, system.dim)
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    out_arr = np.empty(b.dim)
    cdef double[::1] out = out_arr
    cdef double* stack = <double*>malloc((b.stack_size + b.ctrl.n + 1) * sizeof(double))
    if stack == NULL:
        raise MemoryError()
    try:
        rhs_c(&b.prog, &b.ctrl, b.dim, t, &xv[0], &out[0], stack + b.stack_size, stack)
    finally:
        free(stack)
    return out_arr


def rk4(system, x0, double t0, double h, long nsteps):
    cdef _Bound b = _Bound(system.program, system.controls, system.dim)
    cdef int dim = b.dim
    out_arr = np.empty((nsteps + 1, dim))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double* work = <double*>malloc((6 * dim + b.stack_size + b.ctrl.n + 1) * sizeof(double))
    cdef double* x
    cdef double* k1
    cdef double* k2
    cdef double* k3
    cdef double* k4
    cdef double* y
    cdef double* cv
    cdef double* stack
    cdef long n
    cdef int i
    cdef double t, half = 0.5 * h, sixth = h / 6.0
    cdef bint ok = True
    if work == NULL:
        raise MemoryError()
    x = work; k1 = x + dim; k2 = k1 + dim; k3 = k2 + dim; k4 = k3 + dim; y = k4 + dim
    cv = y + dim; stack = cv + b.ctrl.n + 1
    try:
        with nogil:
            for i in range(dim):
                x[i] = x0v[i]
                out[0, i] = x[i]
            for n in range(nsteps):
                t = t0 + n * h
                rhs_c(&b.prog, &b.ctrl, dim, t, x, k1, cv, stack)
                for i in range(dim):
                    y[i] = x[i] + half * k1[i]
                rhs_c(&b.prog, &b.ctrl, dim, t + half, y, k2, cv, stack)
                for i in range(dim):
                    y[i] = x[i] + half * k2[i]
                rhs_c(&b.prog, &b.ctrl, dim, t + half, y, k3, cv, stack)
                for i in range(dim):
                    y[i] = x[i] + h * k3[i]
                rhs_c(&b.prog, &b.ctrl, dim, t + h, y, k4, cv, stack)
                for i in range(dim):
                    x[i] = x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not all_finite(x, dim):
                    ok = False
                    break
                for i in range(dim):
                    out[n + 1, i] = x[i]
        if not ok:
            raise NonFiniteStateError(f"state became non-finite at t={t0 + (n + 1) * h:.6g}")
    finally:
        free(work)
    return out_arr


def dopri(system, x0, double t0, double t1, double rtol, double atol, double h0, double hmax):
    cdef _Bound b = _Bound(system.program, system.controls, system.dim)
    cdef int dim = b.dim
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double* work = <double*>malloc((9 * dim + b.stack_size + b.ctrl.n + 1) * sizeof(double))
    cdef double* x
    cdef double* y
    cdef double* k
    cdef double* cv
    cdef double* stack
    cdef int i, s, m
    cdef double t = t0, h, err, ei, sc, fac, acc, xa, ya
    if work == NULL:
        raise MemoryError()
    x = work; y = x + dim; k = y + dim  # k holds 7 stage vectors
    cv = k + 7 * dim; stack = cv + b.ctrl.n + 1
    ts, xs, ks = [], [], []
    try:
        for i in range(dim):
            x[i] = x0v[i]
        rhs_c(&b.prog, &b.ctrl, dim, t, x, k, cv, stack)
        ts.append(t)
        xs.append([x[i] for i in range(dim)])
        ks.append([k[i] for i in range(dim)])
        h = min(h0, hmax, t1 - t0)
        while t < t1:
            if t + h >= t1 or t + 1.01 * h >= t1:
                h = t1 - t
            if h <= 10.0 * EPS * max(fabs(t), 1.0):
                raise StepUnderflowError(f"step size underflow at t={t:.6g}")
            with nogil:
                for s in range(1, 7):
                    for i in range(dim):
                        acc = 0.0
                        for m in range(s):
                            acc = acc + DA[s][m] * k[m * dim + i]
                        y[i] = x[i] + h * acc
                    rhs_c(&b.prog, &b.ctrl, dim, t + DC[s] * h, y, k + s * dim, cv, stack)
                err = 0.0
                for i in range(dim):
                    acc = 0.0
                    for m in range(7):
                        acc = acc + DE[m] * k[m * dim + i]
                    ei = h * acc
                    xa = fabs(x[i])
                    ya = fabs(y[i])
                    sc = atol + rtol * (xa if xa > ya else ya)
                    err = err + (ei / sc) * (ei / sc)
                err = sqrt(err / dim)
            if not isfinite(err):
                raise NonFiniteStateError(f"state became non-finite near t={t:.6g}")
            if err <= 1.0:
                t = t1 if h == t1 - t else t + h
                for i in range(dim):
                    x[i] = y[i]
                    k[i] = k[6 * dim + i]
                ts.append(t)
                xs.append([x[i] for i in range(dim)])
                ks.append([k[i] for i in range(dim)])
                if err == 0.0:
                    fac = FAC_MAX
                else:
                    fac = min(FAC_MAX, max(FAC_MIN, SAFETY * pow(err, -0.2)))
            else:
                fac = max(FAC_MIN, SAFETY * pow(err, -0.2))
            h = min(h * fac, hmax)
    finally:
        free(work)
    return np.asarray(ts), np.asarray(xs), np.asarray(ks)

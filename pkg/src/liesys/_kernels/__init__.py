"""Hot numerical kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; set ``LIESYS_BACKEND=python``
to force the fallback or ``LIESYS_BACKEND=cython`` to fail loudly when the
extension is missing.  Both backends expose the same four functions:

``eval_points(program, pts)``
    values of every expression at each row of ``pts``
``rhs(system, t, x)``
    one right-hand-side evaluation
``rk4(system, x0, t0, h, nsteps)``
    fixed-step classical Runge-Kutta states, ``(nsteps + 1, dim)``
``dopri(system, x0, t0, t1, rtol, atol, h0, hmax)``
    adaptive Dormand-Prince 5(4) nodes, states and slopes
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

from . import _pykernel
from .program import (
    CTRL_CONSTANT,
    CTRL_POLYNOMIAL,
    CTRL_SINUSOID,
    ControlTable,
    Program,
    System,
    compile_exprs,
    pack_controls,
)

__all__ = [
    "backend",
    "available_backends",
    "get_backend",
    "Program",
    "System",
    "ControlTable",
    "compile_exprs",
    "pack_controls",
    "CTRL_CONSTANT",
    "CTRL_SINUSOID",
    "CTRL_POLYNOMIAL",
]


def _load_compiled() -> ModuleType | None:
    try:
        return importlib.import_module("._ckernel", __name__)
    except ImportError:
        return None


_compiled = _load_compiled()


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_backend(name: str | None = None) -> ModuleType:
    if name is None:
        name = os.environ.get("LIESYS_BACKEND", "").strip().lower() or "auto"
    if name == "python":
        return _pykernel
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    if name == "auto":
        return _compiled if _compiled is not None else _pykernel
    raise ValueError(f"unknown backend {name!r}")


backend = get_backend()

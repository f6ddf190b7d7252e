"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each case is timed with both backends (best of ``--repeat``) and the
results are checked to agree before the speed-up is reported.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from liesys import _kernels, models
from liesys.reconstruct import reconstruct


def cases():
    t1 = models.load("trailer1")
    sys1 = t1.system().system()
    x0 = np.array(t1.default_x0)
    X1, X2 = models.trailer(3)
    prog = _kernels.compile_exprs(list(X2.components), X2.chart.coords)
    pts = np.random.default_rng(0).uniform(-1.0, 1.0, (20_000, X2.chart.dim))
    gam = models.load("gambier(1)")

    return {
        "rk4 trailer1, 5000 steps": lambda k: k.rk4(sys1, x0, 0.0, 1e-3, 5000),
        "dopri trailer1, rtol 1e-10": lambda k: k.dopri(sys1, x0, 0.0, 5.0, 1e-10, 1e-12, 1e-3, np.inf)[1],
        "eval_points trailer3 X2, 20000 points": lambda k: k.eval_points(prog, pts),
        "reconstruct gambier(1), rk4 h=1e-3": lambda k: reconstruct(
            gam.system(), gam.action, gam.connection, gam.default_x0, backend=k
        ).x.states,
    }


def best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="also write the timings here")
    args = p.parse_args(argv)

    if "cython" not in _kernels.available_backends():
        print("compiled extension not built; rebuild with `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    cy, py = _kernels.get_backend("cython"), _kernels.get_backend("python")

    rows = []
    print(f"{'case':42s} {'python [s]':>11s} {'cython [s]':>11s} {'speed-up':>9s} {'max diff':>9s}")
    for name, run in cases().items():
        diff = float(np.max(np.abs(np.asarray(run(cy)) - np.asarray(run(py)))))
        tp, tc = best(lambda: run(py), args.repeat), best(lambda: run(cy), args.repeat)
        rows.append({"case": name, "python": tp, "cython": tc, "speedup": tp / tc, "max_diff": diff})
        print(f"{name:42s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}x {diff:9.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Time the compiled and numpy right-hand-side kernels on the default scenario.

    python benchmarks/bench_rhs.py [--cells 64,128,256,512] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from ccbe import _rhs_py
from ccbe.grid import TruncationConfig, build_grid
from ccbe.kernel_model import DaughterSpec, EfficiencySpec, KernelSpec
from ccbe.operators import build_tables

try:
    from ccbe import _rhs_core
except ImportError:
    _rhs_core = None


def bench(cells, repeat, number):
    grid = build_grid(10.0, cells)
    tables = build_tables(grid, TruncationConfig(10.0, 1), KernelSpec(), EfficiencySpec(value=0.7), DaughterSpec(0.0))
    N = (np.exp(-grid.edges[:-1]) - np.exp(-grid.edges[1:])).copy()
    row = {"cells": cells, "pairs": tables.pi.size}
    backends = {"numpy": _rhs_py.rhs_kernel}
    if _rhs_core is not None:
        backends["cython"] = _rhs_core.rhs_kernel
    ref = _rhs_py.rhs_kernel(N, tables)[0]
    for name, fn in backends.items():
        best = min(timeit.repeat(lambda: fn(N, tables), repeat=repeat, number=number)) / number
        row[name] = best
        row[name + "_maxdiff"] = float(np.max(np.abs(fn(N, tables)[0] - ref)))
    return row


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cells", default="64,128,256,512")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args()
    print(f"{'cells':>6} {'pairs':>8} {'numpy us':>10} {'cython us':>10} {'speedup':>8} {'max |diff|':>11}")
    for cells in (int(c) for c in args.cells.split(",")):
        r = bench(cells, args.repeat, args.number)
        cy = r.get("cython")
        cy_txt = f"{cy * 1e6:10.1f}" if cy else f"{'n/a':>10}"
        speed = f"{r['numpy'] / cy:8.2f}" if cy else f"{'n/a':>8}"
        diff = r.get("cython_maxdiff", 0.0)
        print(f"{cells:6d} {r['pairs']:8d} {r['numpy'] * 1e6:10.1f} {cy_txt} {speed} {diff:11.2e}")


if __name__ == "__main__":
    main()

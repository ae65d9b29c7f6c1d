"""Compare the compiled kernels with the numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel and backend, and the
speed-up of the compiled backend.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from pvd_crossdiff import _kernels_py, solver
from pvd_crossdiff.flux import FluxSchedule

try:
    from pvd_crossdiff import _kernels
except ImportError:
    _kernels = None

K4 = np.array([
    [0.0, 0.1141, 0.0776, 0.0905],
    [0.1141, 0.0, 0.0646, 0.0905],
    [0.0776, 0.0646, 0.0, 0.0905],
    [0.0905, 0.0905, 0.0905, 0.0],
])


def cases(mod):
    rng = np.random.default_rng(0)
    Q = 100
    V = rng.dirichlet(np.ones(4), size=Q)
    Vp = rng.dirichlet(np.ones(4), size=Q)
    grid = solver.Grid(Q)
    phi = np.array([0.9, 2.0, 0.2, 0.7])
    sites = rng.integers(0, 2, 2000).astype(np.int64)
    P = np.array([[0.0, 0.5], [0.5, 0.0]])
    w = [lambda y: y, lambda y: 2 * y, np.sqrt, lambda y: 0.3 + 0 * y]
    v0 = solver.discretize_initial(w, grid)
    sched = FluxSchedule.constant(phi)

    def run_sim():
        saved = solver.kernels
        solver.kernels = mod
        try:
            solver.simulate(v0, sched, K4, grid, 50, 50.0, 1.0)
        finally:
            solver.kernels = saved

    return {
        "assemble (Q=100, 4 species)": lambda: mod.assemble(
            V, Vp, K4, 3.0, 3.8, phi, grid.y, grid.dy, 1.0, 0, -1.0, True),
        "project (Q=100)": lambda: mod.project(V),
        "lattice, 20 sweeps (L=2000)": lambda: mod.lattice_sweeps(sites.copy(), P, 7, 0, 20),
        "simulate, 50 steps (Q=100)": run_sim,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels_py)]
    if _kernels is not None:
        backends.insert(0, ("cython", _kernels))
    else:
        print("compiled kernels unavailable; timing the fallback only")
    timings = {}
    for name, mod in backends:
        for label, fn in cases(mod).items():
            n = 1 if "simulate" in label or "lattice" in label else 20
            best = min(timeit.repeat(fn, number=n, repeat=args.repeat)) / n
            timings.setdefault(label, {})[name] = best
    print(f"{'kernel':32s} {'cython [ms]':>12s} {'python [ms]':>12s} {'speed-up':>9s}")
    for label, t in timings.items():
        c = t.get("cython", float("nan"))
        p = t["python"]
        print(f"{label:32s} {1e3 * c:12.3f} {1e3 * p:12.3f} {p / c:9.1f}")


if __name__ == "__main__":
    main()

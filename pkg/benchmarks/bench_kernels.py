"""Compare the compiled and numpy face-energy kernels.

    python benchmarks/bench_kernels.py [--sizes 32 64 128] [--repeat 20]

Reports the best time per call for each backend, the speedup, and the
maximum difference between the two gradients.
"""

import argparse
import time

import numpy as np

from pqflow import _kernels_py
from pqflow.diffgeo import Grid, MetricField

try:
    from pqflow import _ckernels
except ImportError:
    _ckernels = None


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def setup_2d(n):
    grid = Grid.torus(n)
    x, y = grid.coords()
    g = MetricField(grid, np.stack([np.exp(0.2 * np.cos(x)), 0.1 * np.sin(x + y), np.exp(0.2 * np.sin(y))]))
    f = np.sin(x) + 0.3 * np.cos(2 * y)
    return grid, g.faces, f


def setup_1d(n):
    grid = Grid.circle(n)
    x = grid.coords()[0]
    g = MetricField.conformal(grid, 0.2 * np.cos(x))
    return grid, g.faces, np.sin(x)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--p", type=float, default=4.0)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'case':>10} {'numpy [ms]':>12} {'cython [ms]':>12} {'speedup':>8} {'max |diff|':>11}")
    for dim, setup in ((1, setup_1d), (2, setup_2d)):
        for n in args.sizes:
            if dim == 1:
                n = 16 * n
            grid, fm, f = setup(n)
            if dim == 1:
                def call(mod):
                    return mod.energy_grad_1d(f, fm.gi, fm.sg, grid.h[0], args.p, 1e-8)
            else:
                def call(mod):
                    return mod.energy_grad_2d(f, fm.gi, fm.sg, *grid.h, args.p, 1e-8)
            t_py = best_time(lambda: call(_kernels_py), args.repeat)
            line = f"{dim}D n={n:<5d} {1e3 * t_py:12.3f}"
            if _ckernels is not None:
                t_c = best_time(lambda: call(_ckernels), args.repeat)
                diff = np.max(np.abs(call(_ckernels)[1] - call(_kernels_py)[1]))
                line += f" {1e3 * t_c:12.3f} {t_py / t_c:8.1f} {diff:11.2e}"
            print(line)


if __name__ == "__main__":
    main()

"""Timing comparison of the numba and numpy stencil kernels.

Measures raw operator applications and a full conjugate-gradient Poisson
solve on representative 1D/2D grids.  Run as

    python3 benchmarks/benchmark_kernels.py [--repeats N]

The numba path must be importable for the comparison; with
``QUADGRAD_NUMBA=0`` only the numpy path is timed.
"""

import argparse
import time

import numpy as np

from quadgrad import kernels
from quadgrad.grid import DiffusionOperator, Grid, MatrixField, cg_solve


def time_call(fn, repeats):
    fn()  # warm-up (includes JIT compilation on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_matvec(repeats):
    rows = []
    rng = np.random.default_rng(0)

    n = 4096
    v = rng.standard_normal(n)
    coef = rng.uniform(0.5, 2.0, n + 1)
    inv_h2 = float((n + 1) ** 2)
    variants = [("numpy", kernels.apply_diffusion_1d_numpy)]
    if kernels.USING_NUMBA:
        variants.append(("numba", kernels.apply_diffusion_1d_numba))
    for name, fn in variants:
        rows.append((f"1D matvec n={n}", name,
                     time_call(lambda: fn(v, coef, inv_h2), repeats)))

    nx = ny = 128
    v2 = rng.standard_normal((nx, ny))
    cx = rng.uniform(0.5, 2.0, (nx + 1, ny))
    cy = rng.uniform(0.5, 2.0, (nx, ny + 1))
    inv = float((nx + 1) ** 2)
    variants = [("numpy", kernels.apply_diffusion_2d_numpy)]
    if kernels.USING_NUMBA:
        variants.append(("numba", kernels.apply_diffusion_2d_numba))
    for name, fn in variants:
        rows.append((f"2D matvec {nx}x{ny}", name,
                     time_call(lambda: fn(v2, cx, cy, inv, inv), repeats)))
    return rows


def bench_cg(repeats):
    rows = []
    rng = np.random.default_rng(1)
    grid = Grid((1.0, 1.0), (96, 96))
    op = DiffusionOperator(MatrixField.identity(grid))
    rhs = rng.standard_normal(grid.shape)
    paths = [("numpy", kernels.apply_diffusion_2d_numpy)]
    if kernels.USING_NUMBA:
        paths.append(("numba", kernels.apply_diffusion_2d_numba))
    cx, cy = op.coef
    ihx2, ihy2 = op._inv_h2
    for name, fn in paths:
        def solve(fn=fn):
            cg_solve(lambda v: fn(v, cx, cy, ihx2, ihy2), rhs, tol=1e-10)
        rows.append(("2D Poisson CG 96x96", name, time_call(solve, repeats)))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()
    print(f"numba path available: {kernels.USING_NUMBA}")
    rows = bench_matvec(args.repeats) + bench_cg(max(3, args.repeats // 10))
    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  path   mean time")
    baselines = {}
    for case, name, t in rows:
        speed = ""
        if name == "numpy":
            baselines[case] = t
        elif case in baselines:
            speed = f"  ({baselines[case] / t:.1f}x vs numpy)"
        print(f"{case:<{width}}  {name:<5}  {t * 1e6:10.1f} us{speed}")


if __name__ == "__main__":
    main()

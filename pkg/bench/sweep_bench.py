#!/usr/bin/env python3
"""Benchmark the compiled sweep kernel against the numpy fallback.

Times raw per-direction sweeps and a full forward solve on the same
problem with both kernels and prints a comparison table.

Usage:
    python bench/sweep_bench.py [--cells 64] [--steps 32] [--order 8]
                                [--repeats 3]
"""

import argparse
import time

import numpy as np

from csdplan import (CrossSections, SolverSettings, StoppingPower,
                     build_energy_map, build_grid, build_quadrature, solve_forward)
from csdplan.fields import Field
from csdplan.kernels import have_compiled
from csdplan.transport import sweep_one_direction


def build(cells, steps, order):
    grid = build_grid(2, (4.0, 4.0), (cells, cells))
    quad = build_quadrature(2, order)
    sp = StoppingPower("tabulated", table=([0.0, 1.0], [1.0, 2.0]))
    emap = build_energy_map(sp, 1.0, steps)
    xs = CrossSections(np.full(grid.cells, 1.0), np.full(grid.cells, 0.4))
    return grid, quad, emap, xs


def time_sweeps(grid, quad, xs, kernel, repeats):
    rng = np.random.default_rng(0)
    src = rng.uniform(0.0, 1.0, grid.cells)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for m in range(quad.n_dir):
            sweep_one_direction(grid, xs.sigma_t, quad.directions[m], src, 0.05,
                                kernel=kernel)
        best = min(best, time.perf_counter() - t0)
    return best


def time_forward(grid, quad, emap, xs, kernel, repeats):
    rng = np.random.default_rng(0)
    q = Field(grid, quad, emap)
    q.values[:] = rng.uniform(0.0, 1.0, q.values.shape)
    settings = SolverSettings(tolerance=1e-10, kernel=kernel)
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = solve_forward(q, xs, settings)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", type=int, default=64)
    ap.add_argument("--steps", type=int, default=32)
    ap.add_argument("--order", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    grid, quad, emap, xs = build(args.cells, args.steps, args.order)
    print(f"problem: {args.cells}x{args.cells} cells, {quad.n_dir} directions, "
          f"{args.steps} energy steps")

    kernels = ["numpy"] + (["compiled"] if have_compiled() else [])
    if not have_compiled():
        print("compiled extension not built; benchmarking the fallback only")

    sweep_times = {}
    forward_times = {}
    results = {}
    for kernel in kernels:
        sweep_times[kernel] = time_sweeps(grid, quad, xs, kernel, args.repeats)
        forward_times[kernel], results[kernel] = time_forward(
            grid, quad, emap, xs, kernel, args.repeats)

    print(f"\n{'kernel':<10} {'sweep set':>12} {'forward solve':>15}")
    for kernel in kernels:
        print(f"{kernel:<10} {sweep_times[kernel] * 1e3:>10.2f}ms "
              f"{forward_times[kernel] * 1e3:>13.2f}ms")
    if len(kernels) == 2:
        print(f"\nspeedup: sweeps x{sweep_times['numpy'] / sweep_times['compiled']:.1f}, "
              f"forward x{forward_times['numpy'] / forward_times['compiled']:.1f}")
        diff = np.abs(results["numpy"].values - results["compiled"].values).max()
        scale = np.abs(results["compiled"].values).max()
        print(f"max |numpy - compiled| = {diff:.3e} (solution scale {scale:.3e})")


if __name__ == "__main__":
    main()

"""Shared problem builders and independent brute-force oracles.

Oracles here deliberately avoid the package's vectorized code paths:
plain Python loops and dense matrices, so test expectations are computed
along an independent route.
"""

import numpy as np

from csdplan import (CrossSections, Field, SolverSettings, StoppingPower,
                     build_energy_map, build_grid, build_quadrature)
from csdplan.physics import kernel_eval


def linear_stopping_power():
    """S(eps) = 1 + eps via an (exact) two-point table."""
    return StoppingPower("tabulated", table=([0.0, 1.0], [1.0, 2.0]))


def make_problem(cells=8, steps=8, order=4, sigma_t=1.0, sigma_s=0.4,
                 extent=4.0, linear_s=True, n_dims=2, kernel="isotropic", g=0.0):
    dims = (cells,) * n_dims
    ext = (extent,) * n_dims
    grid = build_grid(n_dims, ext, dims)
    quad = build_quadrature(n_dims, order)
    sp = linear_stopping_power() if linear_s else StoppingPower("constant", value=1.0)
    emap = build_energy_map(sp, 1.0, steps)
    xs = CrossSections(np.full(dims, float(sigma_t)), np.full(dims, float(sigma_s)),
                       kernel=kernel, g=g)
    return grid, quad, emap, xs


def reference_problem():
    """The acceptance reference configuration."""
    return make_problem(cells=32, steps=32, order=8, sigma_t=1.0, sigma_s=0.4,
                        extent=4.0, linear_s=True)


def strict_settings():
    return SolverSettings(tolerance=1e-12)


def brute_weighted_inner(a: Field, b: Field) -> float:
    """Triple-loop discrete inner product (independent of fields.py)."""
    emap, quad, grid = a.emap, a.quad, a.grid
    d_eps = emap.eps_max / emap.n_steps
    vol = 1.0
    for e, c in zip(grid.extent, grid.cells):
        vol *= e / c
    total = 0.0
    for k in range(emap.n_nodes):
        ek = d_eps if k < emap.n_steps else 0.0
        for m in range(quad.n_dir):
            wm = quad.weights[m]
            block = a.values[k, m] * b.values[k, m]
            total += ek * wm * vol * float(block.sum())
    return total


def dense_scatter_apply(slice_values, quad, xs):
    """Dense double-loop scattering application for one energy slice."""
    n_dir = quad.n_dir
    out = np.zeros_like(slice_values)
    for m in range(n_dir):
        for mp in range(n_dir):
            mu = float(np.dot(quad.directions[mp], quad.directions[m]))
            mu = min(1.0, max(-1.0, mu))
            phase = kernel_eval(xs.kernel, 1.0, xs.g, mu, n_dims=quad.n_dims)
            out[m] += quad.weights[mp] * float(phase) * slice_values[mp]
    return xs.sigma_s * out


def random_nonneg(grid, quad, emap, rng, lo=0.0, hi=1.0) -> Field:
    f = Field(grid, quad, emap)
    f.values[:] = rng.uniform(lo, hi, size=f.values.shape)
    return f

"""Adjoint transport solve: the exact transpose of the discrete forward map.

The dual field is marched backward from a zero terminal slice with the
streaming directions reversed (the transpose of an upwind sweep is the
upwind sweep of the opposite direction), the same absorption, and the
same scattering operator (self-adjoint for kernels in Omega'.Omega).
Transposition is taken with respect to the weighted inner product of
`fields.weighted_inner`, whose energy weights carry the slowing-down
Jacobian, so the identity <forward(w), z> = <w, adjoint(z)> holds to
round-off (to the inner iteration tolerance when scattering is present)
and the optimizer's gradient is the exact gradient of the discrete
objective.

Consistency: the recursion discretizes -S(eps) d lambda/d eps =
-Omega.grad lambda - sigma_t lambda + K lambda + r backward in energy,
with lambda = 0 on the outflow set and at the terminal node.
"""

from __future__ import annotations

import numpy as np

from .fields import Field, weighted_inner, weighted_norm
from .physics import CrossSections
from .transport import SolverSettings, StepSolver, scatter_matrix


class AdjointField(Field):
    """Dual field; terminal energy slice and outflow traces are zero."""


def solve_adjoint(source: Field, xs: CrossSections,
                  settings: SolverSettings | None = None) -> AdjointField:
    """Dual solve lambda for a volumetric adjoint source.

    Backward march, transposed step by step from the forward march: with
    mu_k = t_k lambda_k and t_k the energy weight divided by the stopping
    power, the recursion is

        (1/dtau_{k-1} + Omega.grad_reversed + sigma_t - K) mu_k
            = t_k source_k + mu_{k+1} / dtau_k,

    mu_K = 0.  Nodes 0 and K of the output are exactly zero: the terminal
    condition, and the transpose of the fact that the source value at the
    initial node never enters the implicit forward march.
    """
    settings = settings or SolverSettings()
    emap = source.emap
    grid, quad = source.grid, source.quad
    solver = StepSolver(grid, quad, xs, settings)
    lam = AdjointField(grid, quad, emap)
    t_k = emap.node_weights() / emap.s_nodes
    d_tau = emap.d_tau
    try:
        mu_next = np.zeros((quad.n_dir,) + grid.cells)
        for k in range(emap.n_steps - 1, 0, -1):
            rhs = t_k[k] * source.values[k] + mu_next / d_tau[k]
            mu = solver.solve(rhs, float(d_tau[k - 1]), reverse=True)
            lam.values[k] = mu / t_k[k]
            mu_next = mu
    finally:
        solver.close()
    return lam


def adjoint_identity_gap(w: Field, z: Field, xs: CrossSections,
                         settings: SolverSettings | None = None) -> float:
    """Relative defect |<w, adjoint(z)> - <forward(w), z>| / (|w| |z|).

    Zero up to round-off by construction; with scattering, bounded by the
    source-iteration tolerance.
    """
    from .transport import solve_forward

    w.check_compatible(z)
    lam = solve_adjoint(z, xs, settings)
    psi = solve_forward(w, xs, settings)
    lhs = weighted_inner(w, lam)
    rhs = weighted_inner(psi, z)
    scale = weighted_norm(w) * weighted_norm(z)
    if scale == 0.0:
        return 0.0
    return abs(lhs - rhs) / scale


def scatter_symmetry_defect(quad, xs) -> float:
    """Max defect of w_m P[m,m'] symmetry (exact self-adjointness of K)."""
    p = scatter_matrix(quad, xs)
    a = quad.weights[:, None] * p
    return float(np.max(np.abs(a - a.T)))

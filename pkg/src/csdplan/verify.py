"""Property-check battery behind the `verify` subcommand.

Each check returns {"name", "ok", "detail"}; the battery covers the
computable faces of the solver theory: exact discrete adjointness,
finite-difference gradient consistency, positivity of the forward map,
agreement of the remapped march with a direct variable-coefficient
march, and first-order convergence to the collisionless evolution
oracle.  The refinement studies build their own small problems; the
bundled configuration supplies materials, stopping power and sizes.
"""

from __future__ import annotations

import numpy as np

from .adjoint import adjoint_identity_gap
from .fields import Field, random_field, slice_norm, weighted_inner, weighted_norm
from .geometry import build_grid, build_quadrature
from .optimize import ObjectiveConfig, gradient_components, objective
from .physics import CrossSections, StoppingPower, build_energy_map
from .transport import (SolverSettings, StepSolver, free_streaming_oracle,
                        solve_forward)


def smooth_bump(points: np.ndarray, center, radius: float) -> np.ndarray:
    """C-infinity bump with exact compact support of the given radius."""
    center = np.asarray(center, dtype=float)
    r2 = ((points - center[None, :]) ** 2).sum(axis=1) / radius**2
    out = np.zeros(points.shape[0])
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def gaussian_profile(points: np.ndarray, center, sigma: float) -> np.ndarray:
    """Gaussian with uniform smoothness scale (no thin edge shell), used
    where the refinement studies need clean pre-asymptotic first order."""
    center = np.asarray(center, dtype=float)
    r2 = ((points - center[None, :]) ** 2).sum(axis=1)
    return np.exp(-0.5 * r2 / sigma**2)


def bump_source(grid, quad, emap, center, radius) -> Field:
    """Direction- and energy-independent smooth bump source."""
    pts = np.stack([m.ravel() for m in grid.center_mesh()], axis=1)
    profile = smooth_bump(pts, center, radius).reshape(grid.cells)
    q = Field(grid, quad, emap)
    q.values[:] = profile[None, None, ...]
    return q


def adjoint_gap_check(grid, quad, emap, xs, n_pairs: int = 10, seed: int = 7,
                      tolerance: float = 1e-12,
                      bound_scatter: float = 1e-10,
                      bound_pure: float = 1e-12) -> dict:
    """Max adjoint identity defect over random field pairs, with and
    without scattering."""
    settings = SolverSettings(tolerance=tolerance)
    rng = np.random.default_rng(seed)
    xs_pure = CrossSections(xs.sigma_t, np.zeros_like(xs.sigma_s), kernel=xs.kernel,
                            g=xs.g)
    gaps = {"scatter": 0.0, "pure": 0.0}
    for _ in range(n_pairs):
        w = random_field(grid, quad, emap, rng, -1.0, 1.0)
        z = random_field(grid, quad, emap, rng, -1.0, 1.0)
        gaps["scatter"] = max(gaps["scatter"], adjoint_identity_gap(w, z, xs, settings))
        gaps["pure"] = max(gaps["pure"], adjoint_identity_gap(w, z, xs_pure, settings))
    ok = gaps["scatter"] <= bound_scatter and gaps["pure"] <= bound_pure
    return {"name": "adjoint identity",
            "ok": bool(ok),
            "detail": f"gap {gaps['scatter']:.2e} (bound {bound_scatter:.0e}), "
                      f"no scattering {gaps['pure']:.2e} (bound {bound_pure:.0e})"}


def gradient_fd_check(cfg: ObjectiveConfig, xs, settings=None, n_directions: int = 5,
                      seed: int = 11, bound: float = 1e-6,
                      h_ladder=tuple(10.0 ** -k for k in range(1, 10))) -> dict:
    """Central finite differences of J against the adjoint gradient.

    For each random direction the relative error over the step ladder
    must dip below `bound`.  The objective is exactly quadratic in the
    control, so central differences carry no truncation error and the
    classic V curve degenerates to its round-off arm: the error must rise
    clearly as h shrinks past the optimum (checked as err at the smallest
    h exceeding 10x the minimum, with the minimum away from the small-h
    end).
    """
    settings = settings or SolverSettings()
    grid, quad, emap = cfg.psi_bar.grid, cfg.psi_bar.quad, cfg.psi_bar.emap
    rng = np.random.default_rng(seed)
    q0 = random_field(grid, quad, emap, rng, 0.5, 1.5)
    _, g, _, _ = gradient_components(q0, cfg, xs, settings)
    worst_min = 0.0
    v_shape = True
    for _ in range(n_directions):
        dq = random_field(grid, quad, emap, rng, -1.0, 1.0)
        dq = dq * (1.0 / weighted_norm(dq))
        slope = weighted_inner(g, dq)
        errs = []
        for h in h_ladder:
            qp = Field(grid, quad, emap, q0.values + h * dq.values)
            qm = Field(grid, quad, emap, q0.values - h * dq.values)
            jp = objective(solve_forward(qp, xs, settings), qp, cfg)
            jm = objective(solve_forward(qm, xs, settings), qm, cfg)
            fd = (jp - jm) / (2.0 * h)
            errs.append(abs(fd - slope) / max(abs(slope), 1e-300))
        errs = np.array(errs)
        worst_min = max(worst_min, float(errs.min()))
        k = int(np.argmin(errs))
        v_shape &= bool(k < len(errs) - 1 and errs[-1] > 10.0 * errs[k])
    ok = worst_min <= bound and v_shape
    return {"name": "gradient check",
            "ok": bool(ok),
            "detail": f"worst min-over-h relative error {worst_min:.2e} "
                      f"(bound {bound:.0e}), V-shape {'yes' if v_shape else 'no'}"}


def positivity_check(grid, quad, emap, xs, settings=None, n_sources: int = 10,
                     seed: int = 3, bound: float = 1e-13) -> dict:
    """Non-negative sources must give non-negative fluence (to round-off)."""
    settings = settings or SolverSettings()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_sources):
        q = random_field(grid, quad, emap, rng, 0.0, 1.0)
        psi = solve_forward(q, xs, settings)
        top = float(np.abs(psi.values).max())
        if top > 0:
            worst = max(worst, -float(psi.values.min()) / top)
    return {"name": "positivity",
            "ok": bool(worst <= bound),
            "detail": f"worst min(psi)/max(psi) = {-worst:.2e} (bound -{bound:.0e})"}


def direct_variable_coefficient_march(q: Field, xs, settings=None) -> Field:
    """Implicit march of the slowing-down equation in the original energy
    variable, without the remapping; verification twin of solve_forward.

    Step: (S_{k+1}/deps + Omega.grad + sigma_t - K) psi_{k+1}
              = S_k psi_k / deps + q_{k+1}.
    """
    settings = settings or SolverSettings()
    emap = q.emap
    s = emap.s_nodes
    d_eps = emap.d_eps
    solver = StepSolver(q.grid, q.quad, xs, settings)
    psi = Field(q.grid, q.quad, emap)
    try:
        for k in range(emap.n_steps):
            rhs = (s[k] / d_eps) * psi.values[k] + q.values[k + 1]
            psi.values[k + 1] = solver.solve(rhs, float(d_eps / s[k + 1]))
    finally:
        solver.close()
    return psi


def _study_problem(level: int, stopping_power: StoppingPower, sigma_t: float,
                   sigma_s: float, extent: float, quad_order: int):
    grid = build_grid(2, (extent, extent), (level, level))
    quad = build_quadrature(2, quad_order)
    emap = build_energy_map(stopping_power, min(1.0, stopping_power.eps_max or 1.0), level)
    xs = CrossSections(np.full(grid.cells, sigma_t), np.full(grid.cells, sigma_s))
    return grid, quad, emap, xs


def transformation_equivalence_study(stopping_power: StoppingPower,
                                     levels=(16, 32, 64), sigma_t: float = 1.0,
                                     sigma_s: float = 0.4, extent: float = 4.0,
                                     quad_order: int = 8, min_order: float = 0.9,
                                     settings=None) -> dict:
    """Remapped march vs direct variable-coefficient march under refinement.

    Both are first-order consistent discretizations of the same equation;
    their weighted L2 distance must shrink at observed order >= min_order
    when cells and energy steps are refined together.
    """
    settings = settings or SolverSettings()
    errors = []
    for level in levels:
        grid, quad, emap, xs = _study_problem(level, stopping_power, sigma_t,
                                              sigma_s, extent, quad_order)
        q = bump_source(grid, quad, emap, (extent / 2, extent / 2), 0.9 * extent / 4)
        a = solve_forward(q, xs, settings)
        b = direct_variable_coefficient_march(q, xs, settings)
        errors.append(weighted_norm(a - b) / max(weighted_norm(a), 1e-300))
    orders = [float(np.log2(errors[i] / errors[i + 1])) for i in range(len(errors) - 1)]
    ok = all(o >= min_order for o in orders)
    return {"name": "transformation equivalence",
            "ok": bool(ok),
            "detail": f"distances {['%.3e' % e for e in errors]}, "
                      f"orders {['%.2f' % o for o in orders]} (need >= {min_order})"}


def collisionless_study(stopping_power: StoppingPower, levels=(16, 32, 64),
                        extent: float = 5.0, sigma_profile: float = 0.7,
                        eps_horizon: float = 0.5, quad_order: int = 8,
                        min_order: float = 0.9, settings=None,
                        n_quad: int = 48) -> dict:
    """sigma = 0 forward solve against the characteristic-shift oracle.

    The exact solution is the path-length integral of the shifted source
    divided by the stopping power; the discrete upwind solution must
    converge to it at observed order >= min_order.  A Gaussian source and
    a short horizon keep the coarsest level inside the asymptotic regime.
    """
    settings = settings or SolverSettings()
    gl_x, gl_w = np.polynomial.legendre.leggauss(n_quad)
    errors = []
    for level in levels:
        grid = build_grid(2, (extent, extent), (level, level))
        quad = build_quadrature(2, quad_order)
        sp_max = stopping_power.eps_max
        emap = build_energy_map(stopping_power,
                                min(eps_horizon, sp_max) if sp_max else eps_horizon,
                                level)
        xs = CrossSections(np.zeros(grid.cells), np.zeros(grid.cells))
        center = (extent / 2, extent / 2)
        pts = np.stack([m.ravel() for m in grid.center_mesh()], axis=1)
        q = Field(grid, quad, emap)
        q.values[:] = gaussian_profile(pts, center, sigma_profile).reshape(grid.cells)
        psi = solve_forward(q, xs, settings)

        eps_end = emap.eps_nodes[-1]
        s_end = float(emap.s_nodes[-1])
        nodes = 0.5 * eps_end * (gl_x + 1.0)
        weights = 0.5 * eps_end * gl_w

        def eta(points, m):
            return gaussian_profile(points, center, sigma_profile)

        exact = np.zeros((quad.n_dir,) + grid.cells)
        for sigma, wgt in zip(nodes, weights):
            exact += wgt * free_streaming_oracle(eta, eps_end, sigma, grid, quad, emap)
        exact /= s_end
        diff = psi.values[-1] - exact
        errors.append(slice_norm(diff, grid, quad) / max(slice_norm(exact, grid, quad),
                                                         1e-300))
    orders = [float(np.log2(errors[i] / errors[i + 1])) for i in range(len(errors) - 1)]
    ok = all(o >= min_order for o in orders)
    return {"name": "collisionless oracle",
            "ok": bool(ok),
            "detail": f"errors {['%.3e' % e for e in errors]}, "
                      f"orders {['%.2f' % o for o in orders]} (need >= {min_order})"}


def gronwall_check(grid, quad, emap, xs, settings=None, seed: int = 5) -> dict:
    """Discrete norm growth bound under zero source and injected initial data.

    With scattering norm bound k_norm = max sigma_s, the slice norms must
    satisfy |psi(tau_k)|^2 <= exp(2 k_norm tau_k + delta) |psi_0|^2 with
    delta the one-step correction of the implicit march.
    """
    settings = settings or SolverSettings()
    rng = np.random.default_rng(seed)
    psi0 = rng.uniform(0.0, 1.0, size=(quad.n_dir,) + grid.cells)
    q = Field(grid, quad, emap)
    psi = solve_forward(q, xs, settings, initial_slice=psi0)
    k_norm = float(np.max(xs.sigma_s))
    tau = emap.tau_nodes
    a = k_norm * float(np.max(emap.d_tau))
    if a >= 1.0:
        return {"name": "gronwall stability", "ok": False,
                "detail": f"step too large for the bound (k dtau = {a:.2f})"}
    delta = 2.0 * k_norm * tau[-1] * a / (1.0 - a) + 1e-12
    n0 = slice_norm(psi0, grid, quad)
    worst = -np.inf
    for k in range(emap.n_nodes):
        bound = np.exp(2.0 * k_norm * tau[k] + delta) * n0**2
        worst = max(worst, slice_norm(psi.values[k], grid, quad) ** 2 - bound)
    return {"name": "gronwall stability",
            "ok": bool(worst <= 0.0),
            "detail": f"max (|psi_k|^2 - bound) = {worst:.3e} (need <= 0)"}


def run_battery(run_config) -> list:
    """The five verify checks on a loaded RunConfig."""
    rc = run_config
    strict = SolverSettings(tolerance=1e-12,
                            max_inner_iterations=rc.settings.max_inner_iterations,
                            kernel=rc.settings.kernel, threads=rc.settings.threads)
    checks = [
        adjoint_gap_check(rc.grid, rc.quad, rc.emap, rc.xs),
        gradient_fd_check(rc.objective, rc.xs, rc.settings),
        positivity_check(rc.grid, rc.quad, rc.emap, rc.xs, rc.settings),
        transformation_equivalence_study(
            rc.emap.stopping_power,
            levels=tuple(rc.grid.cells[0] * 2**i for i in range(3)),
            sigma_t=float(np.max(rc.xs.sigma_t)), sigma_s=float(np.max(rc.xs.sigma_s)),
            settings=strict),
        collisionless_study(
            rc.emap.stopping_power,
            levels=tuple(rc.grid.cells[0] * 2**i for i in range(3)),
            settings=strict),
    ]
    return checks

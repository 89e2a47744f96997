"""Objective, adjoint gradient, non-negativity projection and the
projected-gradient loop with its fixed-point optimality residual.

The planning problem minimizes a quadratic tracking functional over
non-negative sources q:

  J(q) = 1/2 int alpha_1(x) (int_S (psi - psi_bar) dOmega)^2 dx deps
       + alpha_2/2 int (q - q_bar)^2 dx dOmega deps,   psi = forward(q)

(angle-averaged kind; the full-field kind tracks psi - psi_bar pointwise
in direction).  Because the adjoint solve is the exact transpose of the
discrete forward map, g = lambda + alpha_2 (q - q_bar) is the exact
gradient of the discrete J, and the minimizer is characterized by the
projection fixed point q = (q - lambda - alpha_2 (q - q_bar))^+.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import solve_adjoint
from .fields import Field, weighted_inner, weighted_norm
from .physics import CrossSections
from .transport import SolverSettings, solve_forward

ANGLE_AVERAGED = "angle_averaged"
FULL_FIELD = "full_field"


class OptimizerError(RuntimeError):
    """Line search failed; carries the last accepted state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class ObjectiveConfig:
    """Weights and targets of the tracking functional.

    alpha1 is a per-voxel weight (>= 0, typically assembled from region
    weights); alpha2 > 0 is the control weight; psi_bar and q_bar are
    fields (q_bar must be admissible, i.e. non-negative).
    """

    alpha1: np.ndarray
    alpha2: float
    psi_bar: Field
    q_bar: Field
    kind: str = ANGLE_AVERAGED

    def __post_init__(self):
        self.alpha1 = np.asarray(self.alpha1, dtype=float)
        if self.alpha1.shape != self.psi_bar.grid.cells:
            raise ValueError("alpha1 must be a per-voxel array")
        if np.any(self.alpha1 < 0):
            raise ValueError("alpha1 must be non-negative")
        if self.alpha2 <= 0:
            raise ValueError("alpha2 must be positive")
        if np.any(self.q_bar.values < 0):
            raise ValueError("q_bar must be non-negative (admissible)")
        if self.kind not in (ANGLE_AVERAGED, FULL_FIELD):
            raise ValueError(f"unknown objective kind {self.kind!r}")


def angular_mean_residual(psi: Field, cfg: ObjectiveConfig) -> np.ndarray:
    """Quadrature angular mean of psi - psi_bar, per (energy node, voxel)."""
    psi.check_compatible(cfg.psi_bar)
    diff = psi.values - cfg.psi_bar.values
    return np.tensordot(diff, psi.quad.weights, axes=(1, 0))


def objective(psi: Field, q: Field, cfg: ObjectiveConfig) -> float:
    """Discrete tracking functional J(psi, q)."""
    dq = q - cfg.q_bar
    control = 0.5 * cfg.alpha2 * weighted_inner(dq, dq)
    if cfg.kind == ANGLE_AVERAGED:
        phi = angular_mean_residual(psi, cfg)  # (n_nodes, *cells)
        e_k = psi.emap.node_weights()
        vol = psi.grid.voxel_volume
        spatial = tuple(range(1, phi.ndim))
        per_node = (cfg.alpha1[None, ...] * phi**2).sum(axis=spatial)
        tracking = 0.5 * vol * float(np.dot(e_k, per_node))
    else:
        diff = psi - cfg.psi_bar
        weighted = Field(psi.grid, psi.quad, psi.emap,
                         diff.values * cfg.alpha1[None, None, ...])
        tracking = 0.5 * weighted_inner(diff, weighted)
    return control + tracking


def tracking_source(psi: Field, cfg: ObjectiveConfig) -> Field:
    """Adjoint source dJ_track/dpsi in the weighted pairing."""
    if cfg.kind == ANGLE_AVERAGED:
        phi = angular_mean_residual(psi, cfg)
        values = np.broadcast_to((cfg.alpha1[None, ...] * phi)[:, None, ...],
                                 psi.values.shape).copy()
    else:
        values = cfg.alpha1[None, None, ...] * (psi.values - cfg.psi_bar.values)
    return Field(psi.grid, psi.quad, psi.emap, values)


def gradient(q: Field, cfg: ObjectiveConfig, xs: CrossSections,
             settings: SolverSettings | None = None) -> Field:
    """Exact gradient of the discrete objective at q."""
    _, g, _, _ = gradient_components(q, cfg, xs, settings)
    return g


def gradient_components(q: Field, cfg: ObjectiveConfig, xs: CrossSections,
                        settings: SolverSettings | None = None,
                        psi: Field | None = None):
    """(J, gradient, psi, lambda) at q; `psi` may be passed if already solved."""
    settings = settings or SolverSettings()
    if psi is None:
        psi = solve_forward(q, xs, settings)
    lam = solve_adjoint(tracking_source(psi, cfg), xs, settings)
    g = Field(q.grid, q.quad, q.emap,
              lam.values + cfg.alpha2 * (q.values - cfg.q_bar.values))
    return objective(psi, q, cfg), g, psi, lam


def project_admissible(q: Field) -> Field:
    """Pointwise projection onto the non-negative cone: max(q, 0)."""
    return Field(q.grid, q.quad, q.emap, np.maximum(q.values, 0.0))


def kkt_residual(q: Field, lam: Field, cfg: ObjectiveConfig) -> float:
    """Norm of the projection fixed-point defect, relative to max(|q|, 1).

    Zero exactly at points satisfying q = (q - lambda - alpha_2 (q -
    q_bar))^+.
    """
    inner = q.values - lam.values - cfg.alpha2 * (q.values - cfg.q_bar.values)
    defect = Field(q.grid, q.quad, q.emap, q.values - np.maximum(inner, 0.0))
    return weighted_norm(defect) / max(weighted_norm(q), 1.0)


@dataclass
class OptState:
    """One accepted iterate of the projected-gradient loop."""

    iteration: int
    j_value: float
    grad_norm: float
    kkt: float
    step_size: float


@dataclass
class OptimizeOptions:
    kkt_tolerance: float = 1e-6
    max_iterations: int = 200
    armijo_c: float = 1e-4
    step_shrink: float = 0.5
    min_step: float = 1e-14


@dataclass
class OptimizeResult:
    q: Field
    psi: Field
    lam: Field
    history: list = field(default_factory=list)
    converged: bool = False

    @property
    def final(self) -> OptState:
        return self.history[-1]


def optimize_projected_gradient(q0: Field, cfg: ObjectiveConfig, xs: CrossSections,
                                settings: SolverSettings | None = None,
                                options: OptimizeOptions | None = None) -> OptimizeResult:
    """Projected gradient with Armijo backtracking from unit step.

    Iterates q_{k+1} = (q_k - gamma g_k)^+ and accepts the first gamma in
    {1, 1/2, 1/4, ...} with J(q_new) <= J(q) + c <g, q_new - q>; stops
    when the fixed-point residual drops below the tolerance.  Every
    accepted iterate is feasible and J is non-increasing.
    """
    settings = settings or SolverSettings()
    options = options or OptimizeOptions()
    q = project_admissible(q0)
    j_val, g, psi, lam = gradient_components(q, cfg, xs, settings)
    history = []
    step = 0.0
    for it in range(options.max_iterations + 1):
        kkt = kkt_residual(q, lam, cfg)
        history.append(OptState(it, j_val, weighted_norm(g), kkt, step))
        if kkt <= options.kkt_tolerance:
            return OptimizeResult(q, psi, lam, history, converged=True)
        if it == options.max_iterations:
            break
        gamma = 1.0
        while True:
            q_new = Field(q.grid, q.quad, q.emap,
                          np.maximum(q.values - gamma * g.values, 0.0))
            dq = q_new - q
            slope = weighted_inner(g, dq)
            if weighted_norm(dq) == 0.0:
                # projected step is a fixed point at this gamma
                return OptimizeResult(q, psi, lam, history, converged=True)
            psi_new = solve_forward(q_new, xs, settings)
            j_new = objective(psi_new, q_new, cfg)
            if j_new <= j_val + options.armijo_c * slope:
                break
            gamma *= options.step_shrink
            if gamma < options.min_step:
                raise OptimizerError(
                    f"line search underflow at iteration {it} (J = {j_val:.6e})",
                    state=OptimizeResult(q, psi, lam, history))
        q, step = q_new, gamma
        j_val, g, psi, lam = gradient_components(q, cfg, xs, settings, psi=psi_new)
    return OptimizeResult(q, psi, lam, history, converged=False)

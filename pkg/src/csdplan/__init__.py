"""Deterministic treatment planning under continuous slowing-down transport.

Forward and adjoint discrete-ordinates solves of the slowing-down
transport equation, an exact-transpose adjoint gradient, and a projected
gradient planner over non-negative sources, with dose reporting and a
property-check battery.
"""

from .adjoint import AdjointField, adjoint_identity_gap, solve_adjoint
from .dose import DoseMap, compute_dose, dvh, region_stats
from .fields import Field, TransformedField, weighted_inner, weighted_norm
from .geometry import (AngularQuadrature, RegionMask, SpatialGrid, build_grid,
                       build_quadrature, classify_boundary)
from .kernels import default_kernel, have_compiled
from .optimize import (ObjectiveConfig, OptimizeOptions, OptimizeResult,
                       gradient, kkt_residual, objective,
                       optimize_projected_gradient, project_admissible)
from .physics import (CrossSections, EnergyMap, StoppingPower, build_energy_map,
                      kernel_eval, moller_stopping_power, validate_assumptions)
from .transport import (SolverSettings, free_streaming_oracle, pde_residual,
                        solve_forward, step_energy, sweep_one_direction,
                        transform_source, untransform_state)

__version__ = "0.1.0"

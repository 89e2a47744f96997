"""Spatial grid, angular quadrature and region bookkeeping.

The spatial domain is a rectangular box covered by a uniform Cartesian
voxel grid.  Directions are collocated on the unit circle (2D) or unit
sphere (3D) with quadrature weights that reproduce the surface measure
and have vanishing odd moments, so that upwind sweeps and scattering
integrals are consistent with each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TUMOR = "T"
NORMAL = "N"
RISK = "R"
REGION_LABELS = (TUMOR, NORMAL, RISK)


class ConfigurationError(ValueError):
    """Raised for invalid grid/quadrature/material parameters."""


def sphere_measure(n_dims: int) -> float:
    """Surface measure of the unit sphere S^(n-1): 2*pi in 2D, 4*pi in 3D."""
    if n_dims == 2:
        return 2.0 * np.pi
    if n_dims == 3:
        return 4.0 * np.pi
    raise ConfigurationError(f"unsupported dimension {n_dims}")


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform Cartesian voxel grid over a rectangular box.

    Attributes
    ----------
    n_dims : 2 or 3
    extent : physical side lengths (cm), one per axis
    cells  : voxel counts, one per axis
    h      : voxel size per axis, extent / cells
    """

    n_dims: int
    extent: tuple
    cells: tuple
    h: tuple = field(init=False)

    def __post_init__(self):
        if self.n_dims not in (2, 3):
            raise ConfigurationError(f"n_dims must be 2 or 3, got {self.n_dims}")
        if len(self.extent) != self.n_dims or len(self.cells) != self.n_dims:
            raise ConfigurationError("extent/cells length must match n_dims")
        if any(e <= 0 for e in self.extent):
            raise ConfigurationError(f"extents must be positive, got {self.extent}")
        if any(int(c) != c or c <= 0 for c in self.cells):
            raise ConfigurationError(f"cell counts must be positive integers, got {self.cells}")
        object.__setattr__(self, "extent", tuple(float(e) for e in self.extent))
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        object.__setattr__(self, "h", tuple(e / c for e, c in zip(self.extent, self.cells)))

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.cells))

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.h))

    def centers(self, axis: int) -> np.ndarray:
        """Voxel center coordinates along one axis."""
        h = self.h[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def center_mesh(self) -> list:
        """Voxel center coordinate arrays, each shaped like the grid (ij indexing)."""
        axes = [self.centers(a) for a in range(self.n_dims)]
        return list(np.meshgrid(*axes, indexing="ij"))


def build_grid(n_dims, extent, cells) -> SpatialGrid:
    """Construct a uniform Cartesian grid covering the box [0, extent]."""
    return SpatialGrid(n_dims=n_dims, extent=tuple(extent), cells=tuple(cells))


@dataclass(frozen=True)
class AngularQuadrature:
    """Direction set {Omega_m} with positive weights {w_m}.

    Invariants (checked at construction): unit directions, weights sum to
    the sphere measure, and the first odd moment sum(w_m * Omega_m)
    vanishes.
    """

    n_dims: int
    directions: np.ndarray  # (M, n_dims)
    weights: np.ndarray  # (M,)

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)
        norms = np.linalg.norm(d, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise ConfigurationError("directions must be unit vectors")
        if np.any(w <= 0):
            raise ConfigurationError("quadrature weights must be positive")
        if abs(w.sum() - sphere_measure(self.n_dims)) > 1e-12 * sphere_measure(self.n_dims):
            raise ConfigurationError("weights must sum to the sphere measure")
        if np.max(np.abs(d.T @ w)) > 1e-12:
            raise ConfigurationError("first odd moment of the quadrature must vanish")

    @property
    def n_dir(self) -> int:
        return self.directions.shape[0]


def build_quadrature(n_dims: int, order: int) -> AngularQuadrature:
    """Angular quadrature of the given even order.

    2D: `order` equally spaced directions at angles (2m+1)*pi/order with
    uniform weights 2*pi/order (exact for trigonometric polynomials of
    degree < order).

    3D: product rule with `order` Gauss-Legendre polar cosines and
    2*order equally spaced azimuthal angles; weights sum to 4*pi and all
    odd moments vanish by symmetry.
    """
    if order < 2 or order % 2 != 0:
        raise ConfigurationError(f"quadrature order must be even and >= 2, got {order}")
    if n_dims == 2:
        theta = (2 * np.arange(order) + 1) * np.pi / order
        directions = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        weights = np.full(order, 2.0 * np.pi / order)
        return AngularQuadrature(2, directions, weights)
    if n_dims == 3:
        mu, v = np.polynomial.legendre.leggauss(order)
        n_phi = 2 * order
        phi = (2 * np.arange(n_phi) + 1) * np.pi / n_phi
        sin_t = np.sqrt(1.0 - mu**2)
        directions = np.empty((order * n_phi, 3))
        weights = np.empty(order * n_phi)
        idx = 0
        for l in range(order):
            for j in range(n_phi):
                directions[idx] = (sin_t[l] * np.cos(phi[j]), sin_t[l] * np.sin(phi[j]), mu[l])
                weights[idx] = v[l] * 2.0 * np.pi / n_phi
                idx += 1
        return AngularQuadrature(3, directions, weights)
    raise ConfigurationError(f"unsupported dimension {n_dims}")


@dataclass(frozen=True)
class RegionMask:
    """Per-voxel region label: tumor 'T', normal tissue 'N', or risk 'R'."""

    labels: np.ndarray  # grid-shaped array of single-character labels

    def __post_init__(self):
        labels = np.asarray(self.labels)
        object.__setattr__(self, "labels", labels)
        bad = set(np.unique(labels)) - set(REGION_LABELS)
        if bad:
            raise ConfigurationError(f"unknown region labels {sorted(bad)}")

    def mask(self, label: str) -> np.ndarray:
        return self.labels == label

    def counts(self) -> dict:
        return {lab: int(np.count_nonzero(self.labels == lab)) for lab in REGION_LABELS}


def uniform_region_mask(grid: SpatialGrid, label: str = NORMAL) -> RegionMask:
    return RegionMask(np.full(grid.cells, label, dtype="U1"))


def region_mask_from_boxes(grid: SpatialGrid, default: str = NORMAL,
                           tumor_box=None, risk_box=None) -> RegionMask:
    """Region mask with axis-aligned tumor/risk boxes given as
    [lo_0, hi_0, lo_1, hi_1, ...] in physical coordinates; a voxel belongs
    to a box when its center does."""
    labels = np.full(grid.cells, default, dtype="U1")
    mesh = grid.center_mesh()

    def box_mask(box):
        m = np.ones(grid.cells, dtype=bool)
        for a in range(grid.n_dims):
            m &= (mesh[a] >= box[2 * a]) & (mesh[a] <= box[2 * a + 1])
        return m

    if risk_box is not None:
        labels[box_mask(risk_box)] = RISK
    if tumor_box is not None:
        labels[box_mask(tumor_box)] = TUMOR
    return RegionMask(labels)


@dataclass(frozen=True)
class BoundaryFace:
    """One (boundary voxel face, direction) pair with its flow orientation."""

    voxel: tuple
    normal: tuple  # outward unit normal of the face
    direction: int  # quadrature direction index
    orientation: str  # "inflow" | "outflow" | "neither"


def classify_boundary(grid: SpatialGrid, quad: AngularQuadrature) -> list:
    """Classify every (boundary face, direction) pair by the sign of n.Omega.

    Inflow where n(x).Omega < 0, outflow where > 0, tangential pairs are
    "neither".
    """
    faces = []
    for axis in range(grid.n_dims):
        for side, ncomp in ((0, -1.0), (grid.cells[axis] - 1, +1.0)):
            normal = [0.0] * grid.n_dims
            normal[axis] = ncomp
            ranges = [range(c) for c in grid.cells]
            ranges[axis] = range(side, side + 1)
            for voxel in np.ndindex(*[len(r) for r in ranges]):
                vox = tuple(r[i] for r, i in zip(ranges, voxel))
                for m in range(quad.n_dir):
                    dot = ncomp * quad.directions[m, axis]
                    if dot < 0:
                        orient = "inflow"
                    elif dot > 0:
                        orient = "outflow"
                    else:
                        orient = "neither"
                    faces.append(BoundaryFace(vox, tuple(normal), m, orient))
    return faces

"""Phase-space field containers and the weighted inner product.

A Field stores values over (energy node, direction, voxel...) for a fixed
(grid, quadrature, energy map) triple; the same container holds states,
adjoint states, controls and targets.  The canonical discrete L2 inner
product carries voxel volume, quadrature weight and the energy node
weights of the map; every module (objective, gradient pairing, adjoint
identity, norms) uses this one product so that transposes are exact.
"""

from __future__ import annotations

import numpy as np

from .geometry import AngularQuadrature, SpatialGrid
from .physics import EnergyMap


class ShapeError(ValueError):
    """Field shape does not match its grid/quadrature/energy-map triple."""


class Field:
    """Array over (energy node, direction, *grid cells).

    The energy axis is first so that one energy slice `values[k]` is a
    contiguous (n_dir, *cells) block, which is what the sweep kernels
    consume.
    """

    def __init__(self, grid: SpatialGrid, quad: AngularQuadrature, emap: EnergyMap,
                 values: np.ndarray | None = None):
        self.grid = grid
        self.quad = quad
        self.emap = emap
        shape = (emap.n_nodes, quad.n_dir) + grid.cells
        if values is None:
            values = np.zeros(shape)
        else:
            values = np.asarray(values, dtype=float)
            if values.shape != shape:
                raise ShapeError(f"expected field shape {shape}, got {values.shape}")
        self.values = values

    @property
    def shape(self):
        return self.values.shape

    def copy(self) -> "Field":
        return Field(self.grid, self.quad, self.emap, self.values.copy())

    def zeros_like(self) -> "Field":
        return Field(self.grid, self.quad, self.emap)

    def check_compatible(self, other: "Field"):
        if self.values.shape != other.values.shape:
            raise ShapeError(f"field shapes differ: {self.values.shape} vs {other.values.shape}")

    def __add__(self, other):
        self.check_compatible(other)
        return Field(self.grid, self.quad, self.emap, self.values + other.values)

    def __sub__(self, other):
        self.check_compatible(other)
        return Field(self.grid, self.quad, self.emap, self.values - other.values)

    def __mul__(self, scalar):
        return Field(self.grid, self.quad, self.emap, self.values * float(scalar))

    __rmul__ = __mul__


class TransformedField(Field):
    """Field sampled on the remapped nodes tau_k = r(eps_k).

    State-type transformed fields relate to plain fields by the stopping
    power scaling; adjoint-type ones are plain resamplings (no scaling).
    The array layout is identical to Field; the subclass only documents
    which axis convention the values follow.
    """


def zeros(grid, quad, emap) -> Field:
    return Field(grid, quad, emap)


def full(grid, quad, emap, value: float) -> Field:
    f = Field(grid, quad, emap)
    f.values.fill(value)
    return f


def random_field(grid, quad, emap, rng, low=0.0, high=1.0) -> Field:
    f = Field(grid, quad, emap)
    f.values[:] = rng.uniform(low, high, size=f.values.shape)
    return f


def weighted_inner(a: Field, b: Field) -> float:
    """Discrete L2(Z x S^{n-1} x [0, eps_max]) inner product.

    Weights: voxel volume x quadrature weight w_m x energy node weight
    e_k (left-endpoint rule from the energy map).  Reduction order is
    fixed (energy outermost) for bit-determinism.
    """
    a.check_compatible(b)
    e_k = a.emap.node_weights()
    w_m = a.quad.weights
    vol = a.grid.voxel_volume
    spatial_axes = tuple(range(2, a.values.ndim))
    per_node_dir = (a.values * b.values).sum(axis=spatial_axes)  # (n_nodes, n_dir)
    per_node = per_node_dir @ w_m
    return float(vol * np.dot(e_k, per_node))


def weighted_norm(a: Field) -> float:
    return float(np.sqrt(max(weighted_inner(a, a), 0.0)))


def slice_inner(a_slice: np.ndarray, b_slice: np.ndarray, grid: SpatialGrid,
                quad: AngularQuadrature) -> float:
    """Spatial-angular inner product of two (n_dir, *cells) slices."""
    spatial_axes = tuple(range(1, a_slice.ndim))
    per_dir = (a_slice * b_slice).sum(axis=spatial_axes)
    return float(grid.voxel_volume * np.dot(quad.weights, per_dir))


def slice_norm(a_slice: np.ndarray, grid, quad) -> float:
    return float(np.sqrt(max(slice_inner(a_slice, a_slice, grid, quad), 0.0)))

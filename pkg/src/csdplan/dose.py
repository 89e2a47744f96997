"""Dose computation, region statistics and dose-volume histograms.

Dose is the energy- and angle-integrated fluence weighted by the stopping
power, D(x) = sum_k e_k S(eps_k) sum_m w_m psi(x, m, k), in relative
units (the model carries no absolute calibration).  Bound checks are
advisory diagnostics only; nothing here feeds back into the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field
from .geometry import REGION_LABELS, RISK, RegionMask, SpatialGrid, TUMOR


@dataclass(frozen=True)
class DoseMap:
    grid: SpatialGrid
    values: np.ndarray  # grid-shaped, relative dose units

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.cells:
            raise ValueError(f"dose shape {values.shape} != grid {self.grid.cells}")
        object.__setattr__(self, "values", values)


def compute_dose(psi: Field) -> DoseMap:
    """Integrate S * psi over angle and energy per voxel."""
    weights = psi.emap.node_weights() * psi.emap.s_nodes  # (n_nodes,)
    ang = np.tensordot(psi.values, psi.quad.weights, axes=(1, 0))  # (n_nodes, *cells)
    values = np.tensordot(weights, ang, axes=(0, 0))
    return DoseMap(psi.grid, values)


def region_stats(dose: DoseMap, masks: RegionMask, d_min: float = 0.0,
                 d_max: float = np.inf) -> dict:
    """Per-region dose summary with advisory bound-violation fractions.

    Reports, never enforces: fraction of tumor voxels below d_min and
    fraction of risk voxels above d_max.
    """
    report = {}
    for label in REGION_LABELS:
        sel = dose.values[masks.mask(label)]
        entry = {"voxels": int(sel.size)}
        if sel.size:
            entry.update(min=float(sel.min()), mean=float(sel.mean()),
                         max=float(sel.max()))
        else:
            entry.update(min=None, mean=None, max=None)
        if label == TUMOR:
            entry["underdose_fraction"] = (
                float(np.mean(sel < d_min)) if sel.size else None)
        if label == RISK:
            entry["overdose_fraction"] = (
                float(np.mean(sel > d_max)) if sel.size else None)
        report[label] = entry
    report["bounds"] = {"d_min": float(d_min), "d_max": float(d_max)}
    return report


def dvh(dose: DoseMap, masks: RegionMask, bins: int = 64) -> dict:
    """Cumulative dose-volume histogram per region.

    Returns {label: {"edges", "fraction", "empty"}} where fraction[i] is
    the fraction of the region's voxels with dose >= edges[i].  Edges run
    from 0 past the global maximum dose, so every curve starts at 1 and
    ends at 0; curves are non-increasing by construction.
    """
    if bins < 2:
        raise ValueError("dvh needs at least 2 bins")
    top = float(dose.values.max()) if dose.values.size else 0.0
    edges = np.linspace(0.0, top * 1.05 if top > 0 else 1.0, bins)
    out = {}
    for label in REGION_LABELS:
        sel = dose.values[masks.mask(label)]
        if sel.size == 0:
            out[label] = {"edges": edges, "fraction": np.zeros(bins), "empty": True}
            continue
        fraction = np.array([np.mean(sel >= d) for d in edges])
        out[label] = {"edges": edges, "fraction": fraction, "empty": False}
    return out

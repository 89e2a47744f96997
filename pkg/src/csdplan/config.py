"""Run configuration: YAML schema parsing, phantom files, and assembly of
all solver inputs with the physics assumptions validated up front.

The schema is documented in the README; every key is validated here with
an error naming the offending key or assumption, and no solve starts
before A1-A4 pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .fields import Field
from .geometry import (ConfigurationError, RegionMask, SpatialGrid, AngularQuadrature,
                       build_grid, build_quadrature, region_mask_from_boxes,
                       sphere_measure, uniform_region_mask, REGION_LABELS,
                       NORMAL, RISK, TUMOR)
from .optimize import ANGLE_AVERAGED, FULL_FIELD, ObjectiveConfig, OptimizeOptions
from .physics import (AssumptionError, CrossSections, EnergyMap, StoppingPower,
                      build_energy_map, validate_assumptions)
from .transport import SolverSettings, solve_forward


class ConfigError(ConfigurationError):
    """Configuration file is missing, malformed or violates an assumption."""


def _require(mapping: dict, key: str, context: str):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"missing key '{context}.{key}'" if context
                          else f"missing key '{key}'")
    return mapping[key]


def _get(mapping, key, default=None):
    if not isinstance(mapping, dict):
        return default
    return mapping.get(key, default)


@dataclass
class RunConfig:
    """Fully constructed and validated inputs for one run."""

    grid: SpatialGrid
    quad: AngularQuadrature
    emap: EnergyMap
    xs: CrossSections
    masks: RegionMask
    objective: ObjectiveConfig
    settings: SolverSettings
    opt_options: OptimizeOptions
    initial_control: Field
    source: Field
    d_min: float
    d_max: float
    output_dir: str
    binary_mirror: bool
    assumption_report: dict
    raw: dict = field(repr=False, default_factory=dict)


def load_phantom(path, grid: SpatialGrid):
    """Read per-voxel material and region arrays from a phantom text file.

    Format: optional '#' comments; a header line `dims: n0 n1 [n2]`;
    then named blocks `sigma_t:`, `sigma_s:`, optional `g:` and
    `region:`, each followed by rows of values, one grid row per line
    (row-major: first axis is the line index).  Region rows hold T/N/R
    tokens.
    """
    path = Path(path)
    try:
        lines = [ln.strip() for ln in path.read_text().splitlines()]
    except OSError as exc:
        raise ConfigError(f"cannot read phantom file {path}: {exc}") from exc
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("dims:"):
        raise ConfigError(f"phantom {path}: first line must be 'dims: n0 n1 [n2]'")
    dims = tuple(int(tok) for tok in lines[0][len("dims:"):].split())
    if dims != grid.cells:
        raise ConfigError(f"phantom {path}: dims {dims} do not match grid {grid.cells}")
    n_rows = int(np.prod(dims[:-1]))
    row_len = dims[-1]

    blocks = {}
    i = 1
    while i < len(lines):
        head = lines[i]
        if not head.endswith(":"):
            raise ConfigError(f"phantom {path}: expected a block name, got {head!r}")
        name = head[:-1]
        rows = lines[i + 1:i + 1 + n_rows]
        if len(rows) < n_rows:
            raise ConfigError(f"phantom {path}: block '{name}' expected {n_rows} rows, "
                              f"found {len(rows)}")
        blocks[name] = rows
        i += 1 + n_rows
    for name in ("sigma_t", "sigma_s"):
        if name not in blocks:
            raise ConfigError(f"phantom {path}: missing block '{name}'")

    def parse_block(name, rows):
        data = []
        for r, row in enumerate(rows):
            toks = row.split()
            if len(toks) != row_len:
                raise ConfigError(f"phantom {path}: block '{name}' row {r} expected "
                                  f"{row_len} values, found {len(toks)}")
            data.append(toks)
        return data

    out = {}
    for name in ("sigma_t", "sigma_s", "g"):
        if name in blocks:
            toks = parse_block(name, blocks[name])
            try:
                out[name] = np.array(toks, dtype=float).reshape(dims)
            except ValueError as exc:
                raise ConfigError(f"phantom {path}: block '{name}': {exc}") from exc
    if "region" in blocks:
        toks = parse_block("region", blocks["region"])
        labels = np.array(toks, dtype="U1").reshape(dims)
        bad = set(np.unique(labels)) - set(REGION_LABELS)
        if bad:
            raise ConfigError(f"phantom {path}: unknown region label(s) {sorted(bad)}")
        out["region"] = labels
    return out


def _build_stopping_power(spec: dict) -> StoppingPower:
    kind = _require(spec, "kind", "energy.stopping_power")
    try:
        if kind == "constant":
            return StoppingPower("constant", value=_require(spec, "value",
                                                            "energy.stopping_power"))
        if kind == "tabulated":
            table = _require(spec, "table", "energy.stopping_power")
            return StoppingPower("tabulated",
                                 table=(_require(table, "eps", "table"),
                                        _require(table, "s", "table")))
        if kind == "moller":
            return StoppingPower(
                "moller",
                rho=_require(spec, "rho", "energy.stopping_power"),
                binding_energy=_require(spec, "binding_energy", "energy.stopping_power"),
                r_e=_get(spec, "r_e", 1.0),
                phys_range=_require(spec, "phys_range", "energy.stopping_power"))
        raise ConfigError(f"unknown stopping-power kind {kind!r}")
    except AssumptionError as exc:
        raise ConfigError(f"energy.stopping_power: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"energy.stopping_power: {exc}") from exc


def _field_from_spec(spec, grid, quad, emap, name, phantom_dir: Path) -> Field:
    """Field construction kinds shared by q_bar / source / initial control.

    kinds: zero | constant(value) | box(value, box) | file(path).
    """
    f = Field(grid, quad, emap)
    if spec is None:
        return f
    kind = _require(spec, "kind", name)
    if kind == "zero":
        return f
    if kind == "constant":
        f.values.fill(float(_require(spec, "value", name)))
        return f
    if kind == "box":
        value = float(_require(spec, "value", name))
        box = _require(spec, "box", name)
        if len(box) != 2 * grid.n_dims:
            raise ConfigError(f"{name}.box must have {2 * grid.n_dims} entries")
        mesh = grid.center_mesh()
        mask = np.ones(grid.cells, dtype=bool)
        for a in range(grid.n_dims):
            mask &= (mesh[a] >= box[2 * a]) & (mesh[a] <= box[2 * a + 1])
        f.values[:, :, mask] = value
        return f
    if kind == "file":
        from .io import read_field

        return read_field(phantom_dir / _require(spec, "path", name), grid, quad, emap)
    raise ConfigError(f"{name}.kind: unknown kind {kind!r}")


def _region_alpha(weights: dict, masks: RegionMask, grid: SpatialGrid) -> np.ndarray:
    alpha1 = np.zeros(grid.cells)
    for label, key in ((TUMOR, "tumor"), (NORMAL, "normal"), (RISK, "risk")):
        alpha1[masks.mask(label)] = float(_get(weights, key, 0.0))
    return alpha1


def parse_config(path) -> RunConfig:
    """Load, validate and assemble a run configuration from a YAML file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    base_dir = path.parent

    gspec = _require(raw, "grid", "")
    grid = build_grid(_require(gspec, "dims", "grid"),
                      _require(gspec, "extent", "grid"),
                      _require(gspec, "cells", "grid"))
    quad = build_quadrature(grid.n_dims, _require(_require(raw, "quadrature", ""),
                                                  "order", "quadrature"))

    espec = _require(raw, "energy", "")
    sp = _build_stopping_power(_require(espec, "stopping_power", "energy"))
    eps_max = _get(espec, "eps_max")
    if eps_max is None:
        if sp.eps_max is None:
            raise ConfigError("energy.eps_max is required for constant stopping power")
        eps_max = sp.eps_max
    emap = build_energy_map(sp, float(eps_max), int(_require(espec, "steps", "energy")))

    mspec = _require(raw, "material", "")
    phantom = None
    if _get(mspec, "phantom") is not None:
        phantom = load_phantom(base_dir / mspec["phantom"], grid)
        sigma_t = phantom["sigma_t"]
        sigma_s = phantom["sigma_s"]
        g_arr = phantom.get("g")
        g = float(g_arr.flat[0]) if g_arr is not None else float(_get(mspec, "g", 0.0))
        if g_arr is not None and not np.allclose(g_arr, g_arr.flat[0]):
            raise ConfigError("per-voxel anisotropy is not supported; "
                              "phantom block 'g' must be uniform")
        kernel = _get(mspec, "kernel", "isotropic")
    else:
        uni = _require(mspec, "uniform", "material")
        sigma_t = np.full(grid.cells, float(_require(uni, "sigma_t", "material.uniform")))
        sigma_s = np.full(grid.cells, float(_require(uni, "sigma_s", "material.uniform")))
        kernel = _get(uni, "kernel", "isotropic")
        g = float(_get(uni, "g", 0.0))
    try:
        xs = CrossSections(sigma_t, sigma_s, kernel=kernel, g=g,
                           allow_supercritical=bool(_get(mspec, "allow_supercritical",
                                                         False)))
    except AssumptionError as exc:
        raise ConfigError(f"material: {exc}") from exc

    kernel_bound = float(_get(mspec, "kernel_bound", np.inf))
    report = validate_assumptions(xs, sp, (0.0, emap.eps_max),
                                  kernel_bound=kernel_bound, n_dims=grid.n_dims)
    for name, entry in report.items():
        if not entry["ok"]:
            raise ConfigError(f"assumption {name} violated: {entry['detail']}")

    rspec = _get(raw, "regions")
    if phantom is not None and "region" in phantom:
        masks = RegionMask(phantom["region"])
    elif rspec is not None:
        masks = region_mask_from_boxes(grid,
                                       default=_get(rspec, "default", NORMAL),
                                       tumor_box=_get(rspec, "tumor_box"),
                                       risk_box=_get(rspec, "risk_box"))
    else:
        masks = uniform_region_mask(grid)

    sspec = _get(raw, "solver", {})
    settings = SolverSettings(
        tolerance=float(_get(sspec, "tolerance", 1e-10)),
        max_inner_iterations=int(_get(sspec, "max_inner_iterations", 500)),
        kernel=_get(sspec, "kernel", "auto"),
        threads=int(_get(sspec, "threads", 1)))

    ospec = _require(raw, "objective", "")
    kind = _get(ospec, "kind", ANGLE_AVERAGED)
    if kind not in (ANGLE_AVERAGED, FULL_FIELD):
        raise ConfigError(f"objective.kind: unknown kind {kind!r}")
    alpha1 = _region_alpha(_require(ospec, "weights", "objective"), masks, grid)
    alpha2 = float(_require(ospec, "alpha2", "objective"))
    q_bar = _field_from_spec(_get(ospec, "q_bar"), grid, quad, emap,
                             "objective.q_bar", base_dir)
    if np.any(q_bar.values < 0):
        raise ConfigError("objective.q_bar must be non-negative")

    pspec = _get(ospec, "psi_bar", {"kind": "zero"})
    pkind = _require(pspec, "kind", "objective.psi_bar")
    psi_bar = Field(grid, quad, emap)
    if pkind == "zero":
        pass
    elif pkind == "region_target":
        # isotropic field whose angular mean matches the per-region target
        target = np.zeros(grid.cells)
        for label, key in ((TUMOR, "tumor"), (NORMAL, "normal"), (RISK, "risk")):
            target[masks.mask(label)] = float(_get(pspec, key, 0.0))
        psi_bar.values[:] = (target / sphere_measure(grid.n_dims))[None, None, ...]
    elif pkind == "forward_of_control_target":
        psi_bar = solve_forward(q_bar, xs, settings)
    elif pkind == "file":
        from .io import read_field

        psi_bar = read_field(base_dir / _require(pspec, "path", "objective.psi_bar"),
                             grid, quad, emap)
    else:
        raise ConfigError(f"objective.psi_bar.kind: unknown kind {pkind!r}")

    try:
        obj = ObjectiveConfig(alpha1=alpha1, alpha2=alpha2, psi_bar=psi_bar,
                              q_bar=q_bar, kind=kind)
    except ValueError as exc:
        raise ConfigError(f"objective: {exc}") from exc

    optspec = _get(raw, "optimizer", {})
    opt_options = OptimizeOptions(
        kkt_tolerance=float(_get(optspec, "kkt_tolerance", 1e-6)),
        max_iterations=int(_get(optspec, "max_iterations", 200)))
    initial_control = _field_from_spec(_get(optspec, "initial"), grid, quad, emap,
                                       "optimizer.initial", base_dir)
    if np.any(initial_control.values < 0):
        raise ConfigError("optimizer.initial must be non-negative")

    source = _field_from_spec(_get(raw, "source"), grid, quad, emap, "source", base_dir)
    if _get(raw, "source") is None:
        source = q_bar.copy()

    bspec = _get(raw, "dose_bounds", {})
    outspec = _get(raw, "output", {})
    return RunConfig(
        grid=grid, quad=quad, emap=emap, xs=xs, masks=masks, objective=obj,
        settings=settings, opt_options=opt_options, initial_control=initial_control,
        source=source,
        d_min=float(_get(bspec, "d_min", 0.0)),
        d_max=float(_get(bspec, "d_max", np.inf)),
        output_dir=str(_get(outspec, "directory", "out")),
        binary_mirror=bool(_get(outspec, "binary", False)),
        assumption_report=report, raw=raw)

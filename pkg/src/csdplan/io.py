"""Deterministic text (and optional binary) serialization.

Text layouts (all floats printed with %.17g, which round-trips IEEE
doubles exactly, so read-back equals the written array bit for bit):

  field:   '#' header lines carrying the (nodes, directions, cells)
           shape, then the values flattened in C order, one line per
           trailing-axis row.
  dose:    '#' header with the grid shape, then one line per grid row.
  history: '# columns: iteration j_value grad_norm kkt step_size' header,
           one row per accepted iterate.

The binary mirror is the standard .npy format (little-endian float64).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dose import DoseMap
from .fields import Field

_FMT = "%.17g"


class IOError_(OSError):
    """I/O failure with the offending path attached."""


def _write_text(path: Path, header_lines, array_2d):
    try:
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            np.savetxt(fh, array_2d, fmt=_FMT)
    except OSError as exc:
        raise IOError_(f"cannot write {path}: {exc}") from exc


def _read_text(path: Path):
    try:
        headers = []
        with open(path) as fh:
            for line in fh:
                if line.startswith("#"):
                    headers.append(line[1:].strip())
                else:
                    break
        data = np.loadtxt(path, ndmin=2)
    except OSError as exc:
        raise IOError_(f"cannot read {path}: {exc}") from exc
    meta = {}
    for h in headers:
        if ":" in h:
            key, val = h.split(":", 1)
            meta[key.strip()] = val.strip()
    return meta, data


def write_field(path, f: Field, binary: bool = False):
    path = Path(path)
    shape = f.values.shape
    header = [
        "csdplan field",
        f"nodes: {shape[0]}",
        f"directions: {shape[1]}",
        "cells: " + " ".join(str(c) for c in shape[2:]),
    ]
    _write_text(path, header, f.values.reshape(-1, shape[-1]))
    if binary:
        np.save(path.with_suffix(".npy"), f.values.astype("<f8"))


def read_field(path, grid, quad, emap) -> Field:
    path = Path(path)
    if path.suffix == ".npy":
        values = np.load(path)
        return Field(grid, quad, emap, values)
    meta, data = _read_text(path)
    shape = (emap.n_nodes, quad.n_dir) + grid.cells
    expect = (str(shape[0]), str(shape[1]), " ".join(str(c) for c in shape[2:]))
    got = (meta.get("nodes"), meta.get("directions"), meta.get("cells"))
    if got != expect:
        raise IOError_(f"{path}: field header {got} does not match expected {expect}")
    return Field(grid, quad, emap, data.reshape(shape))


def write_dose(path, dose: DoseMap, binary: bool = False):
    path = Path(path)
    header = ["csdplan dose",
              "cells: " + " ".join(str(c) for c in dose.grid.cells)]
    _write_text(path, header, dose.values.reshape(-1, dose.grid.cells[-1]))
    if binary:
        np.save(path.with_suffix(".npy"), dose.values.astype("<f8"))


def read_dose(path, grid) -> DoseMap:
    meta, data = _read_text(Path(path))
    return DoseMap(grid, data.reshape(grid.cells))


def write_history(path, history):
    path = Path(path)
    rows = np.array([[s.iteration, s.j_value, s.grad_norm, s.kkt, s.step_size]
                     for s in history]).reshape(-1, 5)
    header = ["csdplan optimizer history",
              "columns: iteration j_value grad_norm kkt step_size"]
    _write_text(path, header, rows)


def write_report(path, report: dict):
    path = Path(path)

    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(f"not serializable: {type(o)}")

    try:
        path.write_text(json.dumps(report, indent=2, sort_keys=True,
                                   default=default) + "\n")
    except OSError as exc:
        raise IOError_(f"cannot write {path}: {exc}") from exc

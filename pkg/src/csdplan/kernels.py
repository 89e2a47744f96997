"""Sweep kernel selection: compiled extension if available, numpy fallback.

The default is chosen at import time (compiled when the extension built,
unless CSDPLAN_PURE_PYTHON is set); solvers can override per call via
SolverSettings.kernel in {"auto", "compiled", "numpy"}.
"""

from __future__ import annotations

import os

from . import _sweep_py

try:
    from . import _sweep_cy
except ImportError:  # extension not built; fall back silently
    _sweep_cy = None

_FORCE_PY = bool(os.environ.get("CSDPLAN_PURE_PYTHON"))


def have_compiled() -> bool:
    return _sweep_cy is not None


def default_kernel() -> str:
    return "compiled" if (have_compiled() and not _FORCE_PY) else "numpy"


def get_kernel(name: str = "auto"):
    """Return the kernel module providing sweep_2d / sweep_3d."""
    if name in (None, "auto"):
        name = default_kernel()
    if name == "compiled":
        if _sweep_cy is None:
            raise RuntimeError("compiled sweep kernel requested but the "
                               "csdplan._sweep_cy extension is not built")
        return _sweep_cy
    if name == "numpy":
        return _sweep_py
    raise ValueError(f"unknown kernel {name!r} (expected auto|compiled|numpy)")


def kernel_name(name: str = "auto") -> str:
    mod = get_kernel(name)
    return "compiled" if mod is _sweep_cy else "numpy"

"""Material data: cross sections, scattering kernels, stopping power and
the energy remapping that removes the slowing-down term.

All energies are in units of the electron rest energy.  The public energy
axis runs in the reversed convention (0 = highest physical energy, so the
march starts from zero "pseudo-time"); the Moller model carries a physical
energy window and performs the reversal internally.

The remapped coordinate r(eps) solves dr/deps = 1/S(eps), r(0) = 0.  It is
tabulated with composite Gauss-Legendre quadrature of 1/S and inverted by
monotone cubic interpolation, so both r and its inverse are smooth,
strictly increasing callables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .geometry import ConfigurationError, sphere_measure

ISOTROPIC = "isotropic"
HENYEY_GREENSTEIN = "henyey_greenstein"
KERNEL_KINDS = (ISOTROPIC, HENYEY_GREENSTEIN)


class AssumptionError(ValueError):
    """A material assumption (A1-A4) failed validation."""


def _voxel_index(arr, flat):
    return tuple(int(i) for i in np.unravel_index(int(flat), arr.shape))


def moller_stopping_power(eps, rho: float, eps_b: float, r_e: float = 1.0):
    """Moller inelastic stopping power for a water-like medium.

    Evaluates, term by term, the restricted collision stopping power
    formula in electron-rest-energy units with electron density `rho`,
    binding energy `eps_b` and classical electron radius `r_e`.  The
    formula has a pole at eps = eps_b; callers must keep eps > eps_b.
    Positivity over a working range is *not* guaranteed and is checked
    separately (assumption A4 gate).
    """
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= eps_b):
        raise ValueError(f"Moller stopping power requires eps > eps_b = {eps_b}")
    pref = 2.0 * np.pi * r_e**2 * rho * (eps + 1.0) ** 2 / (eps * (eps + 1.0))
    de = eps - eps_b
    bracket = (
        eps / de
        + 2.0 * np.log(de / (2.0 * eps_b * de))
        + (de**2 / 4.0 - eps_b**2) / (2.0 * (eps + 1.0) ** 2)
        - (2.0 * eps + 1.0) / (eps + 1.0) ** 2 * np.log(2.0)
    )
    return pref * bracket


class StoppingPower:
    """Strictly positive, continuous stopping power S on [0, eps_max].

    Kinds:
      constant   -- S(eps) = value
      tabulated  -- piecewise-linear interpolation of (eps_i, S_i) given
                    on the public (reversed) axis
      moller     -- Moller formula over a declared physical window
                    [phys_lo, phys_hi]; evaluated on the public axis as
                    S(eps') = S_moller(phys_hi - eps'), eps_max =
                    phys_hi - phys_lo

    Construction fails (AssumptionError) if S is not strictly positive
    and finite on a dense sample of the declared range.
    """

    def __init__(self, kind: str, *, value=None, table=None,
                 rho=None, binding_energy=None, r_e=1.0, phys_range=None,
                 n_check: int = 2048):
        self.kind = kind
        if kind == "constant":
            if value is None or value <= 0:
                raise AssumptionError(f"constant stopping power must be positive, got {value}")
            self.value = float(value)
            self.eps_max = None  # valid for any range
        elif kind == "tabulated":
            eps_t, s_t = (np.asarray(a, dtype=float) for a in table)
            if eps_t.ndim != 1 or eps_t.shape != s_t.shape or eps_t.size < 2:
                raise ConfigurationError("stopping-power table needs matching 1D arrays, >= 2 points")
            if np.any(np.diff(eps_t) <= 0):
                raise ConfigurationError("stopping-power table energies must be strictly increasing")
            self.table = (eps_t, s_t)
            self.eps_max = float(eps_t[-1])
            self._check_positive(eps_t[0], eps_t[-1], n_check)
        elif kind == "moller":
            if phys_range is None:
                raise ConfigurationError("moller stopping power needs phys_range=(lo, hi)")
            lo, hi = (float(v) for v in phys_range)
            if not (0.0 < lo < hi):
                raise ConfigurationError(f"invalid Moller energy window ({lo}, {hi})")
            self.rho = float(rho)
            self.binding_energy = float(binding_energy)
            self.r_e = float(r_e)
            self.phys_range = (lo, hi)
            self.eps_max = hi - lo
            if lo <= self.binding_energy:
                raise AssumptionError(
                    f"A4 violated: Moller window reaches eps = {lo} <= binding energy "
                    f"{self.binding_energy} (formula pole)")
            self._check_positive(0.0, self.eps_max, n_check)
        else:
            raise ConfigurationError(f"unknown stopping-power kind {kind!r}")

    def __call__(self, eps):
        eps = np.asarray(eps, dtype=float)
        if self.kind == "constant":
            return np.full_like(eps, self.value)
        if self.kind == "tabulated":
            eps_t, s_t = self.table
            return np.interp(eps, eps_t, s_t)
        lo, hi = self.phys_range
        return moller_stopping_power(hi - eps, self.rho, self.binding_energy, self.r_e)

    def _check_positive(self, lo: float, hi: float, n: int):
        sample = np.linspace(lo, hi, n)
        try:
            values = self(sample)
        except ValueError as exc:
            raise AssumptionError(f"A4 violated: {exc}") from exc
        if not np.all(np.isfinite(values)):
            k = int(np.argmin(np.isfinite(values)))
            raise AssumptionError(f"A4 violated: S not finite at eps = {sample[k]:.6g}")
        if np.any(values <= 0):
            k = int(np.argmax(values <= 0))
            raise AssumptionError(
                f"A4 violated: S(eps) = {values[k]:.6g} <= 0 at eps = {sample[k]:.6g}")


def constant_stopping_power(value: float = 1.0) -> StoppingPower:
    return StoppingPower("constant", value=value)


@dataclass(frozen=True)
class EnergyMap:
    """Discrete energy grid with the slowing-down remapping.

    Nodes eps_k are uniform on [0, eps_max] (reversed convention, initial
    data at node 0).  tau_k = r(eps_k) are their images under the
    remapping; the march in the transformed variable uses the variable
    steps dtau_k = tau_{k+1} - tau_k.  `r_of` / `eps_of` evaluate the
    remapping and its inverse anywhere in the range.
    """

    stopping_power: StoppingPower
    eps_max: float
    n_steps: int  # K; the grid has K+1 nodes
    eps_nodes: np.ndarray = field(init=False)
    s_nodes: np.ndarray = field(init=False)
    tau_nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n_steps < 2:
            raise ConfigurationError(f"need at least 2 energy steps, got {self.n_steps}")
        if self.eps_max <= 0:
            raise ConfigurationError(f"eps_max must be positive, got {self.eps_max}")
        sp_max = self.stopping_power.eps_max
        if sp_max is not None and self.eps_max > sp_max * (1 + 1e-12):
            raise ConfigurationError(
                f"eps_max = {self.eps_max} exceeds stopping-power range {sp_max}")
        eps_nodes = np.linspace(0.0, self.eps_max, self.n_steps + 1)
        # Fine table for r: composite 8-point Gauss-Legendre per fine
        # interval, fine grid a refinement of the node grid so node values
        # are table-exact.
        refine = max(1, int(np.ceil(1024 / self.n_steps)))
        n_fine = self.n_steps * refine
        eps_fine = np.linspace(0.0, self.eps_max, n_fine + 1)
        gl_x, gl_w = np.polynomial.legendre.leggauss(8)
        mid = 0.5 * (eps_fine[:-1] + eps_fine[1:])
        half = 0.5 * np.diff(eps_fine)
        pts = mid[:, None] + half[:, None] * gl_x[None, :]
        s_vals = self.stopping_power(pts)
        if np.any(s_vals <= 0) or not np.all(np.isfinite(s_vals)):
            bad = pts[(s_vals <= 0) | ~np.isfinite(s_vals)]
            raise AssumptionError(f"A4 violated: S <= 0 near eps = {bad.flat[0]:.6g}")
        increments = (half[:, None] * gl_w[None, :] / s_vals).sum(axis=1)
        r_fine = np.concatenate([[0.0], np.cumsum(increments)])
        object.__setattr__(self, "eps_nodes", eps_nodes)
        object.__setattr__(self, "s_nodes", self.stopping_power(eps_nodes))
        object.__setattr__(self, "tau_nodes", r_fine[::refine].copy())
        object.__setattr__(self, "_r_interp", PchipInterpolator(eps_fine, r_fine))
        object.__setattr__(self, "_eps_interp", PchipInterpolator(r_fine, eps_fine))

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def t_r(self) -> float:
        """Total remapped length r(eps_max)."""
        return float(self.tau_nodes[-1])

    @property
    def d_eps(self) -> float:
        return self.eps_max / self.n_steps

    @property
    def d_tau(self) -> np.ndarray:
        return np.diff(self.tau_nodes)

    def r_of(self, eps):
        return self._r_interp(eps)

    def eps_of(self, tau):
        return self._eps_interp(tau)

    def node_weights(self) -> np.ndarray:
        """Energy quadrature weights on the nodes (left-endpoint rule).

        The weight d_eps sits on nodes 0..K-1 and zero on the terminal
        node; this is the unique first-order rule for which the discrete
        adjoint of the implicit march has an exactly zero terminal slice.
        """
        w = np.full(self.n_nodes, self.d_eps)
        w[-1] = 0.0
        return w


def build_energy_map(stopping_power: StoppingPower, eps_max: float, n_steps: int) -> EnergyMap:
    """Tabulate r(eps) on a uniform grid of n_steps intervals over [0, eps_max]."""
    return EnergyMap(stopping_power=stopping_power, eps_max=eps_max, n_steps=n_steps)


def kernel_eval(kind: str, sigma_s, g, mu, n_dims: int = 2):
    """Differential scattering kernel sigma_s(mu) at scattering cosine mu.

    Normalized so that the integral over the full sphere/circle of
    directions equals the total scatter `sigma_s`:

      isotropic          : sigma_s / |S^(n-1)|
      henyey_greenstein  : sigma_s * p_g(mu) with the 2D (Poisson-kernel)
                           or 3D Henyey-Greenstein phase function
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(np.abs(mu) > 1.0 + 1e-12):
        raise ValueError("scattering cosine must lie in [-1, 1]")
    mu = np.clip(mu, -1.0, 1.0)
    measure = sphere_measure(n_dims)
    if kind == ISOTROPIC:
        return np.broadcast_to(np.asarray(sigma_s) / measure, mu.shape).copy()
    if kind == HENYEY_GREENSTEIN:
        g = float(g)
        if not -1.0 < g < 1.0:
            raise ConfigurationError(f"anisotropy g must lie in (-1, 1), got {g}")
        if n_dims == 2:
            phase = (1.0 - g**2) / (2.0 * np.pi * (1.0 + g**2 - 2.0 * g * mu))
        else:
            phase = (1.0 - g**2) / (4.0 * np.pi * (1.0 + g**2 - 2.0 * g * mu) ** 1.5)
        return np.asarray(sigma_s) * phase
    raise ConfigurationError(f"unknown kernel kind {kind!r}")


@dataclass(frozen=True)
class CrossSections:
    """Per-voxel total cross section and scattering-kernel parameters.

    sigma_t and sigma_s are grid-shaped arrays (1/cm); the kernel kind and
    anisotropy g are global for the run.  Construction enforces
    non-negativity and finiteness; the physical sub-criticality
    sigma_s <= sigma_t is enforced unless `allow_supercritical` is set
    (then only warned), because source iteration is guaranteed to
    converge only for scattering ratio < 1.  `validate=False` skips the
    hard gates so that diagnostic reports can be built on bad data.
    """

    sigma_t: np.ndarray
    sigma_s: np.ndarray
    kernel: str = ISOTROPIC
    g: float = 0.0
    allow_supercritical: bool = False
    validate: bool = True

    def __post_init__(self):
        st = np.asarray(self.sigma_t, dtype=float)
        ss = np.asarray(self.sigma_s, dtype=float)
        if st.shape != ss.shape:
            raise ConfigurationError("sigma_t and sigma_s must have the same shape")
        object.__setattr__(self, "sigma_t", st)
        object.__setattr__(self, "sigma_s", ss)
        if self.kernel not in KERNEL_KINDS:
            raise ConfigurationError(f"unknown kernel kind {self.kernel!r}")
        if not self.validate:
            return
        for name, arr in (("sigma_t", st), ("sigma_s", ss)):
            if not np.all(np.isfinite(arr)):
                idx = _voxel_index(arr, np.argmin(np.isfinite(arr)))
                raise AssumptionError(f"A2 violated: {name} not finite at voxel {idx}")
            if np.any(arr < 0):
                idx = _voxel_index(arr, np.argmax(arr < 0))
                raise AssumptionError(f"A1 violated: {name} = {arr[idx]:.6g} < 0 at voxel {idx}")
        if np.any(ss > st * (1 + 1e-12)):
            idx = _voxel_index(st, np.argmax(ss > st))
            msg = (f"sub-criticality violated: sigma_s = {ss[idx]:.6g} > sigma_t = "
                   f"{st[idx]:.6g} at voxel {idx}")
            if self.allow_supercritical:
                import warnings

                warnings.warn(msg, stacklevel=2)
            else:
                raise AssumptionError(msg)

    def kernel_values(self, mu, n_dims: int = 2):
        """sigma_s(x, mu) for scalar total-scatter 1 (phase shape only)."""
        return kernel_eval(self.kernel, 1.0, self.g, mu, n_dims=n_dims)


def validate_assumptions(xs: CrossSections, sp: StoppingPower, eps_range,
                         kernel_bound: float = np.inf, n_dims: int = 2,
                         n_sample: int = 2048) -> dict:
    """Check assumptions A1-A4 and return a per-assumption report.

    Each entry is {"ok": bool, "detail": str}.  A3 integrates the kernel
    over the scattering cosine with high-order quadrature and compares
    the per-voxel maximum against `kernel_bound`.
    """
    report = {}

    a1_ok = bool(np.all(xs.sigma_t >= 0) and np.all(xs.sigma_s >= 0))
    detail = "sigma_t, sigma_s >= 0"
    if not a1_ok:
        arr = xs.sigma_t if np.any(xs.sigma_t < 0) else xs.sigma_s
        idx = _voxel_index(arr, np.argmax(arr < 0))
        detail = f"negative cross section at voxel {idx}"
    report["A1"] = {"ok": a1_ok, "detail": detail}

    a2_ok = bool(np.all(np.isfinite(xs.sigma_t)) and np.all(np.isfinite(xs.sigma_s)))
    report["A2"] = {"ok": a2_ok, "detail": "cross sections bounded" if a2_ok
                    else "non-finite cross section"}

    gl_x, gl_w = np.polynomial.legendre.leggauss(64)
    phase = xs.kernel_values(gl_x, n_dims=n_dims)
    mu_integral = float(np.max(xs.sigma_s)) * float(np.dot(gl_w, phase))
    a3_ok = mu_integral <= kernel_bound * (1 + 1e-12)
    report["A3"] = {"ok": bool(a3_ok),
                    "detail": f"max_x int sigma_s(x,mu) dmu = {mu_integral:.6g} "
                              f"(bound {kernel_bound:g})"}

    lo, hi = eps_range
    sample = np.linspace(lo, hi, n_sample)
    try:
        values = sp(sample)
        finite = np.all(np.isfinite(values))
        positive = np.all(values > 0)
        a4_ok = bool(finite and positive)
        if a4_ok:
            detail = f"min S = {values.min():.6g} over [{lo:g}, {hi:g}]"
        else:
            bad = ~np.isfinite(values) if not finite else (values <= 0)
            detail = f"S fails at eps = {sample[int(np.argmax(bad))]:.6g}"
    except ValueError as exc:
        a4_ok = False
        detail = str(exc)
    report["A4"] = {"ok": a4_ok, "detail": detail}
    return report

"""Pure-numpy upwind sweep kernels (fallback for the compiled extension).

Each sweep solves, for one direction and one implicit energy step,

    (inv_dt + sigma_t(x) + sum_a c_a) u(x) - sum_a c_a u_up_a(x) = rhs(x)

marching in upwind topological order, where c_a = |Omega_a| / h_a and
u_up_a is the upwind neighbor along axis a (a prescribed inflow value at
the upstream boundary).  The update uses only additions, multiplications
and divisions of non-negative coefficients, so non-negative inputs give
non-negative outputs exactly.

The 2D kernel vectorizes over anti-diagonal wavefronts (cells on a
diagonal depend only on the previous diagonal); 3D marches slab by slab
along the third axis, reusing the 2D wavefront per slab.
"""

import numpy as np


def sweep_2d(u, rhs, sigma_t, cx, cy, sx, sy, inv_dt, inflow_x, inflow_y):
    """Fill u (nx, ny) with the upwind solution for signs (sx, sy).

    inflow_x has shape (ny,) (values entering across the x-upstream face),
    inflow_y shape (nx,).
    """
    nx, ny = rhs.shape
    flip = []
    if sx < 0:
        flip.append(0)
    if sy < 0:
        flip.append(1)

    def f(a):
        return np.flip(a, axis=flip) if flip else a

    rhs_f = f(rhs)
    den = inv_dt + f(sigma_t) + cx + cy
    in_x = inflow_x[::-1] if sy < 0 else inflow_x
    in_y = inflow_y[::-1] if sx < 0 else inflow_y
    out = np.empty_like(rhs_f)
    for d in range(nx + ny - 1):
        i_lo = max(0, d - (ny - 1))
        i_hi = min(nx - 1, d)
        ii = np.arange(i_lo, i_hi + 1)
        jj = d - ii
        left = np.where(ii > 0, out[np.maximum(ii - 1, 0), jj], in_x[jj])
        down = np.where(jj > 0, out[ii, np.maximum(jj - 1, 0)], in_y[ii])
        out[ii, jj] = (rhs_f[ii, jj] + cx * left + cy * down) / den[ii, jj]
    u[...] = f(out)
    return u


def sweep_3d(u, rhs, sigma_t, cx, cy, cz, sx, sy, sz, inv_dt,
             inflow_x, inflow_y, inflow_z):
    """Fill u (nx, ny, nz) with the upwind solution for signs (sx, sy, sz).

    inflow_x: (ny, nz), inflow_y: (nx, nz), inflow_z: (nx, ny).
    """
    nx, ny, nz = rhs.shape
    flip = [a for a, s in enumerate((sx, sy, sz)) if s < 0]

    def f(a):
        return np.flip(a, axis=flip) if flip else a

    rhs_f = f(rhs)
    den = inv_dt + f(sigma_t) + cx + cy + cz
    in_x = np.asarray(inflow_x)
    in_y = np.asarray(inflow_y)
    in_z = np.asarray(inflow_z)
    if 1 in flip:
        in_x = in_x[::-1, :]
    if 2 in flip:
        in_x = in_x[:, ::-1]
    if 0 in flip:
        in_y = in_y[::-1, :]
        in_z = in_z[::-1, :]
    if 2 in flip:
        in_y = in_y[:, ::-1]
    if 1 in flip:
        in_z = in_z[:, ::-1]

    out = np.empty_like(rhs_f)
    for k in range(nz):
        below = out[:, :, k - 1] if k > 0 else in_z
        slab_rhs = rhs_f[:, :, k] + cz * below
        slab_den = den[:, :, k]
        slab = out[:, :, k]
        for d in range(nx + ny - 1):
            i_lo = max(0, d - (ny - 1))
            i_hi = min(nx - 1, d)
            ii = np.arange(i_lo, i_hi + 1)
            jj = d - ii
            left = np.where(ii > 0, slab[np.maximum(ii - 1, 0), jj], in_x[jj, k])
            down = np.where(jj > 0, slab[ii, np.maximum(jj - 1, 0)], in_y[ii, k])
            slab[ii, jj] = (slab_rhs[ii, jj] + cx * left + cy * down) / slab_den[ii, jj]
    u[...] = f(out)
    return u

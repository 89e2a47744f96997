# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled upwind sweep kernels.

Same contract as _sweep_py: per-direction upwind solve of
(inv_dt + sigma_t + cx + cy [+ cz]) u - coupling = rhs, marching in
upwind topological order given by the direction signs.  All updates use
non-negative coefficients only.  Loops release the GIL so callers may
run directions on a thread pool.
"""


def sweep_2d(double[:, ::1] u, const double[:, ::1] rhs, const double[:, ::1] sigma_t,
             double cx, double cy, int sx, int sy, double inv_dt,
             const double[::1] inflow_x, const double[::1] inflow_y):
    cdef Py_ssize_t nx = rhs.shape[0]
    cdef Py_ssize_t ny = rhs.shape[1]
    cdef Py_ssize_t i0 = 0 if sx >= 0 else nx - 1
    cdef Py_ssize_t j0 = 0 if sy >= 0 else ny - 1
    cdef Py_ssize_t i, j, ii, jj
    cdef double upx, upy
    with nogil:
        for i in range(nx):
            ii = i0 + sx * i if sx != 0 else i
            for j in range(ny):
                jj = j0 + sy * j if sy != 0 else j
                if i == 0 or sx == 0:
                    upx = inflow_x[jj]
                else:
                    upx = u[ii - sx, jj]
                if j == 0 or sy == 0:
                    upy = inflow_y[ii]
                else:
                    upy = u[ii, jj - sy]
                u[ii, jj] = (rhs[ii, jj] + cx * upx + cy * upy) / \
                    (inv_dt + sigma_t[ii, jj] + cx + cy)
    return u


def sweep_3d(double[:, :, ::1] u, const double[:, :, ::1] rhs, const double[:, :, ::1] sigma_t,
             double cx, double cy, double cz, int sx, int sy, int sz, double inv_dt,
             const double[:, ::1] inflow_x, const double[:, ::1] inflow_y, const double[:, ::1] inflow_z):
    cdef Py_ssize_t nx = rhs.shape[0]
    cdef Py_ssize_t ny = rhs.shape[1]
    cdef Py_ssize_t nz = rhs.shape[2]
    cdef Py_ssize_t i0 = 0 if sx >= 0 else nx - 1
    cdef Py_ssize_t j0 = 0 if sy >= 0 else ny - 1
    cdef Py_ssize_t k0 = 0 if sz >= 0 else nz - 1
    cdef Py_ssize_t i, j, k, ii, jj, kk
    cdef double upx, upy, upz
    with nogil:
        for i in range(nx):
            ii = i0 + sx * i if sx != 0 else i
            for j in range(ny):
                jj = j0 + sy * j if sy != 0 else j
                for k in range(nz):
                    kk = k0 + sz * k if sz != 0 else k
                    if i == 0 or sx == 0:
                        upx = inflow_x[jj, kk]
                    else:
                        upx = u[ii - sx, jj, kk]
                    if j == 0 or sy == 0:
                        upy = inflow_y[ii, kk]
                    else:
                        upy = u[ii, jj - sy, kk]
                    if k == 0 or sz == 0:
                        upz = inflow_z[ii, jj]
                    else:
                        upz = u[ii, jj, kk - sz]
                    u[ii, jj, kk] = (rhs[ii, jj, kk] + cx * upx + cy * upy + cz * upz) / \
                        (inv_dt + sigma_t[ii, jj, kk] + cx + cy + cz)
    return u

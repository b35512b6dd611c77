# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend: fused periodic stencils and the OU micro chain.

Signature-compatible with ``_kernels_np``; selected in ``_backend`` when
importable.  See the numpy module for the array conventions.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def laplacian(double[:, ::1] phi, double[:, ::1] out, double inv_h2):
    cdef Py_ssize_t n = phi.shape[0]
    cdef Py_ssize_t i, j, im, ip, jm, jp
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        ip = i + 1 if i < n - 1 else 0
        for j in range(n):
            jm = j - 1 if j > 0 else n - 1
            jp = j + 1 if j < n - 1 else 0
            out[i, j] = (phi[im, j] + phi[ip, j] + phi[i, jm] + phi[i, jp]
                         - 4.0 * phi[i, j]) * inv_h2
    return np.asarray(out)


def ac_rhs(double[:, ::1] phi, double[:, ::1] out, double kappa,
           double inv_h2, double inv_2h,
           double[::1] adv_x_coef, double[::1] adv_y_coef):
    cdef Py_ssize_t n = phi.shape[0]
    cdef Py_ssize_t i, j, im, ip, jm, jp
    cdef double p, lap, cy
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        ip = i + 1 if i < n - 1 else 0
        cy = adv_x_coef[i]
        for j in range(n):
            jm = j - 1 if j > 0 else n - 1
            jp = j + 1 if j < n - 1 else 0
            p = phi[i, j]
            lap = (phi[im, j] + phi[ip, j] + phi[i, jm] + phi[i, jp] - 4.0 * p) * inv_h2
            out[i, j] = (kappa * lap + p - p * p * p
                         + cy * ((phi[i, jp] - phi[i, jm]) * inv_2h)
                         + adv_y_coef[j] * ((phi[ip, j] - phi[im, j]) * inv_2h))
    return np.asarray(out)


def ac_linearized(double[:, ::1] phi, double[:, ::1] vec, double[:, ::1] out,
                  double kappa, double inv_h2, double inv_2h,
                  double[::1] adv_x_coef, double[::1] adv_y_coef):
    cdef Py_ssize_t n = phi.shape[0]
    cdef Py_ssize_t i, j, im, ip, jm, jp
    cdef double v, lap, cy
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        ip = i + 1 if i < n - 1 else 0
        cy = adv_x_coef[i]
        for j in range(n):
            jm = j - 1 if j > 0 else n - 1
            jp = j + 1 if j < n - 1 else 0
            v = vec[i, j]
            lap = (vec[im, j] + vec[ip, j] + vec[i, jm] + vec[i, jp] - 4.0 * v) * inv_h2
            out[i, j] = (kappa * lap + v - (3.0 * phi[i, j] * phi[i, j]) * v
                         + cy * ((vec[i, jp] - vec[i, jm]) * inv_2h)
                         + adv_y_coef[j] * ((vec[ip, j] - vec[im, j]) * inv_2h))
    return np.asarray(out)


def ou_chain(double[:, ::1] y, double[::1] decay, double[::1] amp,
             double[:, :, ::1] xi, int n_burnin, double[:, :, ::1] out):
    cdef Py_ssize_t n_total = xi.shape[0]
    cdef Py_ssize_t m = y.shape[0]
    cdef Py_ssize_t d = y.shape[1]
    cdef Py_ssize_t k, r, j
    cdef double t
    for k in range(n_total):
        for r in range(m):
            for j in range(d):
                t = y[r, j] * decay[j]
                y[r, j] = t + amp[j] * xi[k, r, j]
        if k >= n_burnin:
            for r in range(m):
                for j in range(d):
                    out[k - n_burnin, r, j] = y[r, j]
    return np.asarray(out)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a numpy twin in ``_pykernels`` with the same
signature and the same floating-point semantics up to summation order.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, cos, sin, M_PI

cnp.import_array()

cdef double INV4PI = 0.25 / M_PI


cdef inline double _inv_dist_sum(const double* sx, const double* sy, const double* sz,
                                 const double* w, Py_ssize_t lo, Py_ssize_t hi,
                                 double tx, double ty, double tz) noexcept nogil:
    cdef double acc = 0.0
    cdef double dx, dy, dz
    cdef Py_ssize_t s
    for s in range(lo, hi):
        dx = tx - sx[s]
        dy = ty - sy[s]
        dz = tz - sz[s]
        acc += w[s] / sqrt(dx * dx + dy * dy + dz * dz)
    return acc


def slp_dense(double[:, ::1] targets,
              double[:, :, ::1] nodes, double[:, ::1] weights,
              double[:, :, ::1] fine_nodes, double[:, ::1] fine_weights,
              double[:, ::1] centers, double[::1] radii, double eta,
              double[::1] self_vals):
    """Dense single-layer collocation matrix with near/self handling."""
    cdef Py_ssize_t n = targets.shape[0]
    cdef Py_ssize_t nq = nodes.shape[1]
    cdef Py_ssize_t nf = fine_nodes.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double tx, ty, tz, dx, dy, dz, acc, lim
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] A = out
    for i in prange(n, nogil=True, schedule='static'):
        tx = targets[i, 0]
        ty = targets[i, 1]
        tz = targets[i, 2]
        for j in range(n):
            if i == j:
                A[i, j] = self_vals[i]
                continue
            dx = tx - centers[j, 0]
            dy = ty - centers[j, 1]
            dz = tz - centers[j, 2]
            lim = eta * radii[j]
            acc = 0.0
            if dx * dx + dy * dy + dz * dz < lim * lim:
                for k in range(nf):
                    dx = tx - fine_nodes[j, k, 0]
                    dy = ty - fine_nodes[j, k, 1]
                    dz = tz - fine_nodes[j, k, 2]
                    acc = acc + fine_weights[j, k] / sqrt(dx * dx + dy * dy + dz * dz)
            else:
                for k in range(nq):
                    dx = tx - nodes[j, k, 0]
                    dy = ty - nodes[j, k, 1]
                    dz = tz - nodes[j, k, 2]
                    acc = acc + weights[j, k] / sqrt(dx * dx + dy * dy + dz * dz)
            A[i, j] = acc * INV4PI
    return out


def slp_coarse_matvec(double[:, ::1] targets, double[:, :, ::1] nodes,
                      double[:, ::1] weights, double[::1] x):
    """y_i = sum_{j != i} x_j sum_k w_jk / (4 pi |t_i - p_jk|)."""
    cdef Py_ssize_t n = targets.shape[0]
    cdef Py_ssize_t m = nodes.shape[0]
    cdef Py_ssize_t nq = nodes.shape[1]
    cdef Py_ssize_t i, j, k, s
    cdef double tx, ty, tz, dx, dy, dz, acc
    # flatten sources to structure-of-arrays, node s = j * nq + k
    sx_a = np.ascontiguousarray(np.asarray(nodes)[:, :, 0]).ravel()
    sy_a = np.ascontiguousarray(np.asarray(nodes)[:, :, 1]).ravel()
    sz_a = np.ascontiguousarray(np.asarray(nodes)[:, :, 2]).ravel()
    wx_a = (np.asarray(weights) * np.asarray(x)[:, None]).ravel()
    cdef double[::1] sx = sx_a
    cdef double[::1] sy = sy_a
    cdef double[::1] sz = sz_a
    cdef double[::1] wx = wx_a
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    for i in prange(n, nogil=True, schedule='static'):
        tx = targets[i, 0]
        ty = targets[i, 1]
        tz = targets[i, 2]
        acc = (_inv_dist_sum(&sx[0], &sy[0], &sz[0], &wx[0], 0, i * nq, tx, ty, tz)
               + _inv_dist_sum(&sx[0], &sy[0], &sz[0], &wx[0], (i + 1) * nq, m * nq, tx, ty, tz))
        y[i] = acc * INV4PI
    return out


def slp_centroid_matvec(double[:, ::1] points, double[::1] weights, double[::1] x):
    """Symmetric one-point variant: y_i = sum_{j != i} w_j x_j / (4 pi |p_i - p_j|).

    Each pair distance is evaluated once and scattered to both rows, so the
    loop is serial.
    """
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t i, j
    cdef double tx, ty, tz, dx, dy, dz, inv, acc, wi
    px_a = np.ascontiguousarray(np.asarray(points)[:, 0])
    py_a = np.ascontiguousarray(np.asarray(points)[:, 1])
    pz_a = np.ascontiguousarray(np.asarray(points)[:, 2])
    wx_a = np.asarray(weights) * np.asarray(x)
    cdef double[::1] px = px_a
    cdef double[::1] py = py_a
    cdef double[::1] pz = pz_a
    cdef double[::1] wx = wx_a
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    with nogil:
        for i in range(n):
            tx = px[i]
            ty = py[i]
            tz = pz[i]
            wi = wx[i]
            acc = 0.0
            for j in range(i + 1, n):
                dx = tx - px[j]
                dy = ty - py[j]
                dz = tz - pz[j]
                inv = 1.0 / sqrt(dx * dx + dy * dy + dz * dz)
                acc += wx[j] * inv
                y[j] += wi * inv
            y[i] += acc
        for i in range(n):
            y[i] *= INV4PI
    return out


def helmholtz_pairs(double[:, ::1] points, double kappa):
    """Matrix of Phi_kappa(z_m, z_j) with a zero diagonal."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, r, s
    re_out = np.zeros((n, n), dtype=np.float64)
    im_out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] re = re_out
    cdef double[:, ::1] im = im_out
    for i in prange(n, nogil=True, schedule='static'):
        for j in range(i + 1, n):
            dx = points[i, 0] - points[j, 0]
            dy = points[i, 1] - points[j, 1]
            dz = points[i, 2] - points[j, 2]
            r = sqrt(dx * dx + dy * dy + dz * dz)
            s = INV4PI / r
            re[i, j] = cos(kappa * r) * s
            im[i, j] = sin(kappa * r) * s
            re[j, i] = re[i, j]
            im[j, i] = im[i, j]
    return re_out + 1j * im_out


def helmholtz_potential(double[:, ::1] targets, double[:, ::1] sources,
                        double kappa, double complex[:, ::1] charges):
    """sum_m Phi_kappa(x, z_m) Q_m for each target and each charge column."""
    cdef Py_ssize_t nt = targets.shape[0]
    cdef Py_ssize_t ns = sources.shape[0]
    cdef Py_ssize_t nc = charges.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double dx, dy, dz, r, s, gr, gi
    # real and imaginary parts kept apart so the inner loop is plain double arithmetic
    cdef double[:, ::1] qr = np.ascontiguousarray(np.asarray(charges).real)
    cdef double[:, ::1] qi = np.ascontiguousarray(np.asarray(charges).imag)
    ore = np.zeros((nt, nc))
    oim = np.zeros((nt, nc))
    cdef double[:, ::1] Ur = ore
    cdef double[:, ::1] Ui = oim
    for i in prange(nt, nogil=True, schedule='static'):
        for j in range(ns):
            dx = targets[i, 0] - sources[j, 0]
            dy = targets[i, 1] - sources[j, 1]
            dz = targets[i, 2] - sources[j, 2]
            r = sqrt(dx * dx + dy * dy + dz * dz)
            s = INV4PI / r
            gr = cos(kappa * r) * s
            gi = sin(kappa * r) * s
            for c in range(nc):
                Ur[i, c] = Ur[i, c] + gr * qr[j, c] - gi * qi[j, c]
                Ui[i, c] = Ui[i, c] + gr * qi[j, c] + gi * qr[j, c]
    return ore + 1j * oim

# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kernels.

Same scalar operations, in the same order, as ``pykernels.py`` — the build
disables fp contraction so both backends round identically and the test
suite can require bit-equality.  Keep in lockstep with the Python source.
"""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def simulate_outputs(double[::1] a, double[::1] b, double[::1] u, double[::1] d):
    """Output recursion; see pykernels.simulate_outputs for the contract."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t big_k = d.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y_arr = np.empty(big_k, dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef Py_ssize_t k, i, j, t
    cdef double acc
    for k in range(1, big_k + 1):
        acc = d[k - 1]
        for i in range(1, m + 1):
            t = k - i
            if t >= 1:
                acc -= a[i - 1] * y[t - 1]
        for j in range(1, n + 1):
            t = k - j
            if t >= 0:
                acc += b[j - 1] * u[t]
        y[k - 1] = acc
    return y_arr


def rls_scan(double[::1] y, double[::1] u, Py_ssize_t m, Py_ssize_t n,
             double[::1] theta0, double[:, ::1] p0,
             cnp.int64_t[::1] snapshot_ks, double projection_radius):
    """RLS scan with snapshots; see pykernels.rls_scan for the contract."""
    cdef Py_ssize_t dim = m + n
    cdef Py_ssize_t n_snap = snapshot_ks.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] theta_out = np.empty((n_snap, dim), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] trace_out = np.empty(n_snap, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] theta_final = np.empty(dim, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_final = np.empty((dim, dim), dtype=np.float64)
    cdef double[:, ::1] theta_out_v = theta_out
    cdef double[::1] trace_out_v = trace_out
    cdef cnp.ndarray[cnp.float64_t, ndim=1] th_arr = np.array(theta0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p_arr = np.array(p0, dtype=np.float64)
    cdef double[::1] th = th_arr
    cdef double[:, ::1] p = p_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] scratch = np.zeros(2 * dim, dtype=np.float64)
    cdef double[::1] phi = scratch[:dim]
    cdef double[::1] w = scratch[dim:]
    cdef double radius = projection_radius
    cdef Py_ssize_t si = 0
    cdef Py_ssize_t k, i, j, jj, t
    cdef Py_ssize_t k_max = <Py_ssize_t> snapshot_ks[n_snap - 1]
    cdef double acc, s, gain, innov, coef, gw, v, sq, scale, tr
    for k in range(1, k_max + 1):
        for i in range(1, m + 1):
            t = k - i
            phi[i - 1] = -y[t - 1] if t >= 1 else 0.0
        for j in range(1, n + 1):
            t = k - j
            phi[m + j - 1] = u[t] if t >= 0 else 0.0
        s = 0.0
        for i in range(dim):
            acc = 0.0
            for jj in range(dim):
                acc += p[i, jj] * phi[jj]
            w[i] = acc
        for i in range(dim):
            s += phi[i] * w[i]
        gain = 1.0 / (1.0 + s)
        innov = y[k - 1]
        for i in range(dim):
            innov -= phi[i] * th[i]
        coef = gain * innov
        for i in range(dim):
            th[i] += coef * w[i]
        for i in range(dim):
            gw = gain * w[i]
            for jj in range(dim):
                p[i, jj] -= gw * w[jj]
        for i in range(dim):
            for jj in range(i + 1, dim):
                v = 0.5 * (p[i, jj] + p[jj, i])
                p[i, jj] = v
                p[jj, i] = v
        if radius > 0.0:
            sq = 0.0
            for i in range(dim):
                sq += th[i] * th[i]
            if sq > radius * radius:
                scale = radius / sqrt(sq)
                for i in range(dim):
                    th[i] *= scale
        if si < n_snap and k == snapshot_ks[si]:
            for i in range(dim):
                theta_out_v[si, i] = th[i]
            tr = 0.0
            for i in range(dim):
                tr += p[i, i]
            trace_out_v[si] = tr
            si += 1
    for i in range(dim):
        theta_final[i] = th[i]
        for jj in range(dim):
            p_final[i, jj] = p[i, jj]
    return theta_out, trace_out, theta_final, p_final

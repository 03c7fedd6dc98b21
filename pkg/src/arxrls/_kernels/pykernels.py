"""Pure-Python reference kernels.

These are the fallback implementations of the two hot loops (output
recursion and the RLS scan).  The compiled kernels in ``cykernels.pyx``
perform the *same scalar operations in the same order*, so the two backends
produce bit-identical results; keep the loops here in lockstep with the
Cython source when editing either.
"""

import math

import numpy as np


def simulate_outputs(a, b, u, d):
    """Run the output recursion y_k = -sum a_i y_{k-i} + sum b_j u_{k-j} + d_k.

    Parameters
    ----------
    a : (m,) float64 array
        AR coefficients a_1..a_m.
    b : (n,) float64 array
        Input coefficients b_1..b_n.
    u : (K+1,) float64 array
        Inputs u_0..u_K.
    d : (K,) float64 array
        Disturbances d_1..d_K.

    Returns
    -------
    (K,) float64 array of outputs y_1..y_K.  Indices before the start of
    the record (y_k for k <= 0, u_k for k < 0) contribute zero.
    """
    m = a.shape[0]
    n = b.shape[0]
    big_k = d.shape[0]
    a_l = a.tolist()
    b_l = b.tolist()
    u_l = u.tolist()
    d_l = d.tolist()
    y = [0.0] * big_k
    for k in range(1, big_k + 1):
        acc = d_l[k - 1]
        for i in range(1, m + 1):
            t = k - i
            if t >= 1:
                acc -= a_l[i - 1] * y[t - 1]
        for j in range(1, n + 1):
            t = k - j
            if t >= 0:
                acc += b_l[j - 1] * u_l[t]
        y[k - 1] = acc
    return np.asarray(y, dtype=np.float64)


def rls_scan(y, u, m, n, theta0, p0, snapshot_ks, projection_radius):
    """Run the RLS recursion for k = 1..snapshot_ks[-1], recording snapshots.

    Per step, with phi_k the regressor at time k:

        w     = P phi
        gain  = 1 / (1 + phi' w)
        theta += (gain * (y_k - phi' theta)) * w
        P     -= gain * w w'          (then resymmetrized pairwise)

    If ``projection_radius`` > 0, theta is radially projected onto the closed
    ball of that radius after each update; when the iterate is already inside
    the ball the projection leaves every bit unchanged.

    Returns (theta_snaps (S, m+n), trace_snaps (S,), theta_final, p_final).
    """
    dim = m + n
    y_l = y.tolist()
    u_l = u.tolist()
    th = theta0.tolist()
    p = [[float(p0[i, j]) for j in range(dim)] for i in range(dim)]
    phi = [0.0] * dim
    w = [0.0] * dim
    ks = [int(v) for v in snapshot_ks]
    n_snap = len(ks)
    theta_out = np.empty((n_snap, dim), dtype=np.float64)
    trace_out = np.empty(n_snap, dtype=np.float64)
    radius = float(projection_radius)
    si = 0
    for k in range(1, ks[-1] + 1):
        for i in range(1, m + 1):
            t = k - i
            phi[i - 1] = -y_l[t - 1] if t >= 1 else 0.0
        for j in range(1, n + 1):
            t = k - j
            phi[m + j - 1] = u_l[t] if t >= 0 else 0.0
        s = 0.0
        for i in range(dim):
            acc = 0.0
            p_i = p[i]
            for jj in range(dim):
                acc += p_i[jj] * phi[jj]
            w[i] = acc
        for i in range(dim):
            s += phi[i] * w[i]
        gain = 1.0 / (1.0 + s)
        innov = y_l[k - 1]
        for i in range(dim):
            innov -= phi[i] * th[i]
        coef = gain * innov
        for i in range(dim):
            th[i] += coef * w[i]
        for i in range(dim):
            gw = gain * w[i]
            p_i = p[i]
            for jj in range(dim):
                p_i[jj] -= gw * w[jj]
        for i in range(dim):
            p_i = p[i]
            for jj in range(i + 1, dim):
                v = 0.5 * (p_i[jj] + p[jj][i])
                p_i[jj] = v
                p[jj][i] = v
        if radius > 0.0:
            sq = 0.0
            for i in range(dim):
                sq += th[i] * th[i]
            if sq > radius * radius:
                scale = radius / math.sqrt(sq)
                for i in range(dim):
                    th[i] *= scale
        if si < n_snap and k == ks[si]:
            for i in range(dim):
                theta_out[si, i] = th[i]
            tr = 0.0
            for i in range(dim):
                tr += p[i][i]
            trace_out[si] = tr
            si += 1
    theta_final = np.asarray(th, dtype=np.float64)
    p_final = np.asarray(p, dtype=np.float64)
    return theta_out, trace_out, theta_final, p_final

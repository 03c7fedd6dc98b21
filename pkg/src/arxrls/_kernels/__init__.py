"""Kernel backend selection.

The compiled Cython kernels are used when the extension built; otherwise
(or when the ``ARXRLS_PURE`` environment variable is set to a non-empty,
non-"0" value) the pure-Python reference kernels take over.  Both backends
execute the same scalar operations in the same order, so results are
bit-identical either way.
"""

import os

import numpy as np

_FORCE_PURE = os.environ.get("ARXRLS_PURE", "") not in ("", "0")

if _FORCE_PURE:
    from . import pykernels as _impl

    BACKEND = "pure"
else:
    try:
        from . import cykernels as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import pykernels as _impl

        BACKEND = "pure"


def _vec(x, name):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not arr.flags.writeable:
        arr = arr.copy()
    return arr


def simulate_outputs(a, b, u, d):
    """Dispatch the output recursion to the active backend.

    Shapes: a (m,), b (n,), u (K+1,), d (K,); returns y (K,).
    """
    a = _vec(a, "a")
    b = _vec(b, "b")
    u = _vec(u, "u")
    d = _vec(d, "d")
    if u.shape[0] != d.shape[0] + 1:
        raise ValueError("u must have exactly one more sample than d")
    return _impl.simulate_outputs(a, b, u, d)


def rls_scan(y, u, m, n, theta0, p0, snapshot_ks, projection_radius=0.0):
    """Dispatch the RLS scan to the active backend.

    ``snapshot_ks`` must be a nonempty strictly increasing list of step
    indices in 1..len(y); the scan runs through the last of them.  A
    ``projection_radius`` of 0 disables projection entirely.
    """
    y = _vec(y, "y")
    u = _vec(u, "u")
    m = int(m)
    n = int(n)
    dim = m + n
    theta0 = _vec(theta0, "theta0")
    p0 = np.ascontiguousarray(p0, dtype=np.float64)
    if not p0.flags.writeable:
        p0 = p0.copy()
    ks = np.ascontiguousarray(snapshot_ks, dtype=np.int64)
    if not ks.flags.writeable:
        ks = ks.copy()
    if min(m, n) < 0 or dim < 1:
        raise ValueError("orders must be nonnegative with m + n >= 1")
    if theta0.shape != (dim,) or p0.shape != (dim, dim):
        raise ValueError("theta0 / p0 shape does not match m + n")
    if ks.ndim != 1 or ks.size == 0:
        raise ValueError("snapshot_ks must be a nonempty 1-d index list")
    if ks[0] < 1 or ks[-1] > y.shape[0] or np.any(np.diff(ks) <= 0):
        raise ValueError("snapshot_ks must be strictly increasing within 1..len(y)")
    if u.shape[0] != y.shape[0] + 1:
        raise ValueError("u must have exactly one more sample than y")
    radius = float(projection_radius)
    if radius < 0.0 or not np.isfinite(radius):
        raise ValueError("projection_radius must be finite and >= 0")
    return _impl.rls_scan(y, u, m, n, theta0, p0, ks, radius)

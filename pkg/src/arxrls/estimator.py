"""Projection-free recursive least squares, plus the batch oracle and the
exact algebraic identities that tie the recursion to it.

Recursion (gain a_k, covariance-like matrix P_k):

    a_k     = 1 / (1 + phi_k' P_{k-1} phi_k)
    theta_k = theta_{k-1} + a_k P_{k-1} phi_k (y_k - phi_k' theta_{k-1})
    P_k     = P_{k-1} - a_k P_{k-1} phi_k phi_k' P_{k-1}

By the matrix inversion lemma P_k = (sum_{l<=k} phi_l phi_l' + P_0^{-1})^{-1},
so the recursion reproduces the regularized batch solution exactly; the
``batch_oracle`` and ``woodbury_residual`` functions check both facts with
independent dense linear algebra.

Error convention: theta_tilde = theta_hat - theta (estimate minus truth).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .model import Trajectory, regressor_matrix

#: Condition-number threshold above which the batch solve warns.
COND_WARN_THRESHOLD = 1e12

#: Default P_0 = DEFAULT_P0_SCALE * I.
DEFAULT_P0_SCALE = 100.0


class IllConditionedWarning(UserWarning):
    """The batch normal matrix is numerically ill conditioned."""


def _check_vector(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class RlsConfig:
    """Estimator settings: prior (theta0, P0) and optional projection.

    ``p0`` takes precedence over ``p0_scale``; when absent the prior
    covariance is ``p0_scale * I``.  ``projection_radius`` enables radial
    projection of the iterate onto a centered ball — by default there is
    none, and with a radius that contains the iterates projection is the
    identity bit for bit.
    """

    theta0: np.ndarray | None = None
    p0: np.ndarray | None = None
    p0_scale: float = DEFAULT_P0_SCALE
    projection_radius: float | None = None

    def __post_init__(self):
        if self.theta0 is not None:
            object.__setattr__(self, "theta0", _check_vector(self.theta0, "theta0"))
        scale = float(self.p0_scale)
        if not (math.isfinite(scale) and scale > 0.0):
            raise ValueError("p0_scale must be finite and > 0")
        object.__setattr__(self, "p0_scale", scale)
        if self.p0 is not None:
            p0 = np.asarray(self.p0, dtype=np.float64)
            if p0.ndim != 2 or p0.shape[0] != p0.shape[1]:
                raise ValueError("p0 must be a square matrix")
            if not np.all(np.isfinite(p0)):
                raise ValueError("p0 contains non-finite entries")
            if not np.array_equal(p0, p0.T):
                raise ValueError("p0 must be symmetric")
            try:
                np.linalg.cholesky(p0)
            except np.linalg.LinAlgError:
                raise ValueError("p0 must be positive definite") from None
            object.__setattr__(self, "p0", p0)
        if self.projection_radius is not None:
            radius = float(self.projection_radius)
            if not (math.isfinite(radius) and radius > 0.0):
                raise ValueError("projection_radius must be finite and > 0")
            object.__setattr__(self, "projection_radius", radius)

    def initial_theta(self, dim) -> np.ndarray:
        if self.theta0 is None:
            return np.zeros(dim)
        if self.theta0.size != dim:
            raise ValueError("theta0 length does not match m + n")
        return self.theta0.copy()

    def initial_p(self, dim) -> np.ndarray:
        if self.p0 is None:
            return self.p0_scale * np.eye(dim)
        if self.p0.shape[0] != dim:
            raise ValueError("p0 shape does not match m + n")
        return self.p0.copy()


@dataclass(frozen=True)
class RlsState:
    """Estimator state after step k."""

    theta_hat: np.ndarray
    p: np.ndarray
    k: int

    def __post_init__(self):
        theta = _check_vector(self.theta_hat, "theta_hat")
        p = np.asarray(self.p, dtype=np.float64)
        if p.shape != (theta.size, theta.size):
            raise ValueError("p shape does not match theta_hat")
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "k", int(self.k))


def initial_state(dim, config: RlsConfig = RlsConfig()) -> RlsState:
    """State at k = 0: (theta0, P0)."""
    return RlsState(config.initial_theta(dim), config.initial_p(dim), 0)


def step_gain(state: RlsState, phi) -> float:
    """a_k = 1 / (1 + phi' P phi); always in (0, 1] while P is PSD."""
    phi = _check_vector(phi, "phi")
    return 1.0 / (1.0 + float(phi @ state.p @ phi))


def rls_step(state: RlsState, phi, y) -> RlsState:
    """One measurement update.  Refuses non-finite phi or y.

    The updated P is explicitly resymmetrized, (P + P') / 2, to keep
    round-off from accumulating asymmetry over long scans.
    """
    phi = _check_vector(phi, "phi")
    if phi.size != state.theta_hat.size:
        raise ValueError("phi length does not match the state dimension")
    y = float(y)
    if not math.isfinite(y):
        raise ValueError("y must be finite")
    w = state.p @ phi
    gain = 1.0 / (1.0 + float(phi @ w))
    innovation = y - float(phi @ state.theta_hat)
    theta = state.theta_hat + (gain * innovation) * w
    p_new = state.p - gain * np.outer(w, w)
    p_new = 0.5 * (p_new + p_new.T)
    return RlsState(theta, p_new, state.k + 1)


def project(theta, radius) -> np.ndarray:
    """Radial projection onto the closed ball of ``radius`` about 0.

    Points already inside (or on) the ball are returned unchanged, bit for
    bit; outside points are rescaled onto the boundary.
    """
    theta = _check_vector(theta, "theta")
    radius = float(radius)
    if not (math.isfinite(radius) and radius > 0.0):
        raise ValueError("radius must be finite and > 0")
    norm = float(np.linalg.norm(theta))
    if norm <= radius:
        return theta.copy()
    return theta * (radius / norm)


@dataclass(frozen=True)
class RlsTrace:
    """Snapshots of an RLS scan at selected step indices."""

    snapshot_ks: np.ndarray
    theta_hats: np.ndarray  # (S, dim)
    trace_p: np.ndarray  # (S,)
    final: RlsState


def run_rls(
    trajectory: Trajectory,
    m,
    n,
    config: RlsConfig = RlsConfig(),
    snapshot_ks=None,
) -> RlsTrace:
    """Scan the recursion over a trajectory via the active kernel backend.

    ``snapshot_ks`` defaults to the single index [horizon].  Projection is
    applied after each update iff the config carries a radius.
    """
    m = int(m)
    n = int(n)
    dim = m + n
    if snapshot_ks is None:
        snapshot_ks = [trajectory.horizon]
    ks = np.asarray(snapshot_ks, dtype=np.int64)
    radius = config.projection_radius if config.projection_radius is not None else 0.0
    theta_snaps, trace_snaps, theta_final, p_final = _kernels.rls_scan(
        trajectory.y,
        trajectory.u,
        m,
        n,
        config.initial_theta(dim),
        config.initial_p(dim),
        ks,
        radius,
    )
    final = RlsState(theta_final, p_final, int(ks[-1]))
    return RlsTrace(ks, theta_snaps, trace_snaps, final)


def batch_oracle(
    trajectory: Trajectory, k, m, n, config: RlsConfig = RlsConfig()
) -> np.ndarray:
    """Regularized batch least squares at step k, solved directly:

        (sum_{l<=k} phi_l phi_l' + P_0^{-1}) theta = sum phi_l y_l + P_0^{-1} theta_0

    This shares no code with the recursion (dense factorization via
    ``numpy.linalg.solve``), which is what makes it a useful oracle.  Emits
    ``IllConditionedWarning`` when the normal matrix condition number
    exceeds ``COND_WARN_THRESHOLD``.
    """
    k = int(k)
    dim = int(m) + int(n)
    theta0 = config.initial_theta(dim)
    p0_inv = np.linalg.inv(config.initial_p(dim))
    phi_mat = regressor_matrix(trajectory.y, trajectory.u, m, n, k)
    normal = phi_mat.T @ phi_mat + p0_inv
    rhs = phi_mat.T @ trajectory.y[:k] + p0_inv @ theta0
    cond = float(np.linalg.cond(normal))
    if cond > COND_WARN_THRESHOLD:
        warnings.warn(
            f"batch normal matrix condition number {cond:.3g} exceeds "
            f"{COND_WARN_THRESHOLD:.0e}; the solution may lose digits",
            IllConditionedWarning,
            stacklevel=2,
        )
    return np.linalg.solve(normal, rhs)


def woodbury_residual(
    state: RlsState, trajectory: Trajectory, m, n, config: RlsConfig = RlsConfig()
) -> float:
    """Relative residual of the closed form for P_k:

        || P_k^{-1} - (sum_{l<=k} phi_l phi_l' + P_0^{-1}) ||_2 / || . ||_2

    computed with dense inversion, independent of the recursion.
    """
    dim = state.theta_hat.size
    p0_inv = np.linalg.inv(config.initial_p(dim))
    if state.k == 0:
        target = p0_inv
    else:
        phi_mat = regressor_matrix(trajectory.y, trajectory.u, m, n, state.k)
        target = phi_mat.T @ phi_mat + p0_inv
    p_inv = np.linalg.inv(state.p)
    denom = float(np.linalg.norm(target, 2))
    return float(np.linalg.norm(p_inv - target, 2)) / denom


@dataclass(frozen=True)
class ErrorDecomposition:
    """Exact error representation at step k.

    With L_k = sum_{l<=k} phi_l d_l + P_0^{-1} (theta_hat_0 - theta), the
    recursion error satisfies theta_tilde_k = P_k L_k identically;
    ``residual`` is || theta_tilde - P L || / max(|| theta_tilde ||, eps).
    """

    l_vector: np.ndarray
    theta_tilde: np.ndarray
    residual: float


def error_decomposition(
    state: RlsState,
    trajectory: Trajectory,
    system,
    config: RlsConfig = RlsConfig(),
) -> ErrorDecomposition:
    """Evaluate L_k and the identity theta_tilde_k = P_k L_k.

    Needs the trajectory's disturbance record; raises ValueError without it.
    """
    if trajectory.d is None:
        raise ValueError("error decomposition needs the disturbance record d")
    dim = state.theta_hat.size
    theta = system.theta
    if theta.size != dim:
        raise ValueError("system parameter dimension does not match the state")
    p0_inv = np.linalg.inv(config.initial_p(dim))
    theta_tilde0 = config.initial_theta(dim) - theta
    if state.k == 0:
        l_vec = p0_inv @ theta_tilde0
    else:
        phi_mat = regressor_matrix(
            trajectory.y, trajectory.u, system.m, system.n, state.k
        )
        l_vec = phi_mat.T @ trajectory.d[: state.k] + p0_inv @ theta_tilde0
    theta_tilde = state.theta_hat - theta
    gap = float(np.linalg.norm(theta_tilde - state.p @ l_vec))
    residual = gap / max(float(np.linalg.norm(theta_tilde)), 1e-30)
    return ErrorDecomposition(l_vec, theta_tilde, residual)


def write_trace_csv(path, trace: RlsTrace, theta_true=None) -> None:
    """Write snapshots as CSV: ``k,theta_hat_1..theta_hat_dim,trace_P,err_norm``.

    ``err_norm`` is || theta_hat - theta_true ||_2 when the truth is given,
    else the column is left empty.  Floats use ``repr`` for exact
    round-tripping.
    """
    path = Path(path)
    dim = trace.theta_hats.shape[1]
    if theta_true is not None:
        theta_true = _check_vector(theta_true, "theta_true")
        if theta_true.size != dim:
            raise ValueError("theta_true length does not match the trace")
    header = (
        ["k"]
        + [f"theta_hat_{i}" for i in range(1, dim + 1)]
        + ["trace_P", "err_norm"]
    )
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, k in enumerate(trace.snapshot_ks):
            cells = [str(int(k))]
            cells += [repr(float(v)) for v in trace.theta_hats[row]]
            cells.append(repr(float(trace.trace_p[row])))
            if theta_true is None:
                cells.append("")
            else:
                err = float(np.linalg.norm(trace.theta_hats[row] - theta_true))
                cells.append(repr(err))
            writer.writerow(cells)

"""Quasi-stationary covariance estimation and the excitation matrix.

Sample covariances are Cesaro averages over the output sample range,

    R_ab(tau) = (1/K) * sum_{l=1}^{K} a_l b_{l-tau},

with out-of-range factors treated as zero on both sides (y_l exists for
1 <= l <= K, u_l for 0 <= l <= K).  The 1/K normalizer is used at every
lag.  Under this convention R_yy is exactly symmetric in +-tau; R_yu is
not, so the table stores negative lags explicitly.

The excitation matrix is the stationary limit of E[phi_k phi_k'] assembled
from the table; its smallest eigenvalue decides persistent excitation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import MAX_ORDER, Trajectory


class DegenerateExcitationError(ValueError):
    """The excitation matrix is (numerically) singular: the input does not
    excite the system richly enough for consistent identification."""


def _lag_sum(a_vals, a_start, b_vals, b_start, tau, l_hi):
    """sum_{l=1}^{l_hi} a_l b_{l-tau} with zero padding outside each record.

    ``a_vals[i]`` holds a_{a_start + i} and likewise for b.
    """
    lo = max(1, a_start, tau + b_start)
    hi = min(l_hi, a_start + len(a_vals) - 1, tau + b_start + len(b_vals) - 1)
    if hi < lo:
        return 0.0
    a_seg = a_vals[lo - a_start : hi - a_start + 1]
    b_seg = b_vals[lo - tau - b_start : hi - tau - b_start + 1]
    return float(a_seg @ b_seg)


@dataclass(frozen=True)
class CovarianceTable:
    """Sample covariances on the lag window -tau_max..tau_max.

    Arrays are indexed by ``tau + tau_max``; ``sample_size`` records the K
    the averages were taken over.
    """

    tau_max: int
    ryy: np.ndarray
    ruu: np.ndarray
    ryu: np.ndarray
    sample_size: int

    def __post_init__(self):
        tau_max = int(self.tau_max)
        if tau_max < 0:
            raise ValueError("tau_max must be >= 0")
        object.__setattr__(self, "tau_max", tau_max)
        width = 2 * tau_max + 1
        for name in ("ryy", "ruu", "ryu"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (width,):
                raise ValueError(f"{name} must have length 2 * tau_max + 1")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "sample_size", int(self.sample_size))

    def _at(self, arr, tau):
        tau = int(tau)
        if abs(tau) > self.tau_max:
            raise ValueError(f"lag {tau} outside the stored window +-{self.tau_max}")
        return float(arr[tau + self.tau_max])

    def ryy_at(self, tau) -> float:
        return self._at(self.ryy, tau)

    def ruu_at(self, tau) -> float:
        return self._at(self.ruu, tau)

    def ryu_at(self, tau) -> float:
        return self._at(self.ryu, tau)

    def to_csv(self, path) -> None:
        """Write rows ``tau,Ryy,Ruu,Ryu`` for tau = -tau_max..tau_max."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# sample_size: {self.sample_size}\n")
            writer = csv.writer(fh)
            writer.writerow(["tau", "Ryy", "Ruu", "Ryu"])
            for t, tau in enumerate(range(-self.tau_max, self.tau_max + 1)):
                writer.writerow(
                    [
                        str(tau),
                        repr(float(self.ryy[t])),
                        repr(float(self.ruu[t])),
                        repr(float(self.ryu[t])),
                    ]
                )

    @classmethod
    def from_csv(cls, path) -> "CovarianceTable":
        path = Path(path)
        sample_size = 0
        rows = []
        with path.open(newline="") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line.lstrip("# ").partition(":")
                    if key.strip() == "sample_size":
                        sample_size = int(value)
                    continue
                rows.append(next(csv.reader([line])))
        if not rows or rows[0] != ["tau", "Ryy", "Ruu", "Ryu"]:
            raise ValueError("unexpected covariance table header")
        body = rows[1:]
        taus = [int(r[0]) for r in body]
        tau_max = max(taus)
        if taus != list(range(-tau_max, tau_max + 1)):
            raise ValueError("covariance table lags must run -tau_max..tau_max")
        ryy = np.array([float(r[1]) for r in body])
        ruu = np.array([float(r[2]) for r in body])
        ryu = np.array([float(r[3]) for r in body])
        return cls(tau_max, ryy, ruu, ryu, sample_size)


def estimate_covariances(trajectory: Trajectory, tau_max) -> CovarianceTable:
    """Estimate the covariance table from one record.

    Requires a record longer than the lag window (K > tau_max).  R_yy at
    -tau reuses the +tau value, making the stored table exactly symmetric.
    """
    tau_max = int(tau_max)
    if tau_max < 0:
        raise ValueError("tau_max must be >= 0")
    big_k = trajectory.horizon
    if big_k <= tau_max:
        raise ValueError("record too short for the requested lag window")
    y = trajectory.y
    u = trajectory.u
    width = 2 * tau_max + 1
    ryy = np.empty(width)
    ruu = np.empty(width)
    ryu = np.empty(width)
    scale = 1.0 / big_k
    for tau in range(0, tau_max + 1):
        v = _lag_sum(y, 1, y, 1, tau, big_k) * scale
        ryy[tau_max + tau] = v
        ryy[tau_max - tau] = v
    for tau in range(-tau_max, tau_max + 1):
        ruu[tau_max + tau] = _lag_sum(u, 0, u, 0, tau, big_k) * scale
        ryu[tau_max + tau] = _lag_sum(y, 1, u, 0, tau, big_k) * scale
    return CovarianceTable(tau_max, ryy, ruu, ryu, big_k)


@dataclass(frozen=True)
class ExcitationMatrix:
    """Stationary regressor second-moment matrix and its smallest eigenvalue."""

    matrix: np.ndarray
    min_eigenvalue: float


def build_excitation_matrix(table: CovarianceTable, m, n) -> ExcitationMatrix:
    """Assemble the (m+n) x (m+n) stationary E[phi phi'] from the table.

    With phi = [-y_{k-1}..-y_{k-m}, u_{k-1}..u_{k-n}]' the blocks are

        M[i-1, i'-1]     =  Ryy(|i - i'|)
        M[i-1, m+j-1]    = -Ryu(j - i)      (signed lag; mirrored below)
        M[m+j-1, m+j'-1] =  Ruu(|j - j'|)

    The result is exactly symmetric by construction.  Requires the table to
    cover lags up to max(m, n) - 1.
    """
    m = int(m)
    n = int(n)
    dim = m + n
    if m < 0 or n < 0 or dim < 1:
        raise ValueError("orders must be nonnegative with m + n >= 1")
    if max(m, n) > MAX_ORDER:
        raise ValueError(f"orders are capped at {MAX_ORDER}")
    needed = max(m, n) - 1
    if table.tau_max < needed:
        raise ValueError(
            f"table covers lags +-{table.tau_max}, need +-{needed} for (m={m}, n={n})"
        )
    mat = np.empty((dim, dim))
    for i in range(1, m + 1):
        for i2 in range(i, m + 1):
            v = table.ryy_at(abs(i - i2))
            mat[i - 1, i2 - 1] = v
            mat[i2 - 1, i - 1] = v
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            v = -table.ryu_at(j - i)
            mat[i - 1, m + j - 1] = v
            mat[m + j - 1, i - 1] = v
    for j in range(1, n + 1):
        for j2 in range(j, n + 1):
            v = table.ruu_at(abs(j - j2))
            mat[m + j - 1, m + j2 - 1] = v
            mat[m + j2 - 1, m + j - 1] = v
    min_eig = float(np.linalg.eigvalsh(mat)[0])
    return ExcitationMatrix(mat, min_eig)


def default_eps_pd(matrix) -> float:
    """Default positive-definiteness floor: 1e-6 * trace(M) / dim."""
    matrix = np.asarray(matrix, dtype=np.float64)
    dim = matrix.shape[0]
    return 1e-6 * float(np.trace(matrix)) / dim


def check_persistent_excitation(excitation: ExcitationMatrix, eps_pd=None) -> bool:
    """True iff the smallest eigenvalue clears the floor (default
    ``default_eps_pd`` of the matrix)."""
    if eps_pd is None:
        eps_pd = default_eps_pd(excitation.matrix)
    eps_pd = float(eps_pd)
    if eps_pd <= 0.0:
        raise ValueError("eps_pd must be > 0")
    return excitation.min_eigenvalue > eps_pd

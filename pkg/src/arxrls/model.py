"""ARX system model, input generation, and trajectory simulation.

The system is A(z) y_k = B(z) u_k + d_k with
A(z) = 1 + a_1 z + ... + a_m z^m and B(z) = b_1 z + ... + b_n z^n,
using the convention y_k = 0 for k <= 0 and u_k = 0 for k < 0.  The
parameter vector is theta = [a_1..a_m, b_1..b_n]' and the regressor is
phi_k = [-y_{k-1}..-y_{k-m}, u_{k-1}..u_{k-n}]', so y_k = phi_k' theta + d_k.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .seeding import as_generator

#: Stability margin: every zero of A(z) must have modulus > 1 + TOL_ROOT.
TOL_ROOT = 1e-9

#: Largest supported polynomial order for either a_coeffs or b_coeffs.
MAX_ORDER = 10

_SQRT3 = math.sqrt(3.0)


class UnstableSystemError(ValueError):
    """Simulation was requested for a system whose A(z) is not stable."""


def _float_vector(values, name, max_len=None, allow_empty=True):
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64)).copy()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not allow_empty and arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if max_len is not None and arr.size > max_len:
        raise ValueError(f"{name} has length {arr.size}, limit is {max_len}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class StabilityReport:
    """Result of the A(z) root check."""

    stable: bool
    min_root_modulus: float  # inf when A(z) has no roots (all a_i zero)


def check_stability(a_coeffs) -> StabilityReport:
    """Check that all zeros of A(z) = 1 + a_1 z + ... + a_m z^m lie strictly
    outside the closed unit disc, with margin ``TOL_ROOT``.

    Trailing zero coefficients reduce the effective degree; a polynomial
    with no zeros at all (A(z) = 1) is reported stable with infinite
    minimum root modulus.
    """
    a = _float_vector(a_coeffs, "a_coeffs")
    if a.size == 0 or not np.any(a):
        return StabilityReport(True, math.inf)
    # np.roots wants highest degree first: [a_m, ..., a_1, 1].
    roots = np.roots(np.concatenate([a[::-1], [1.0]]))
    if roots.size == 0:
        return StabilityReport(True, math.inf)
    min_mod = float(np.min(np.abs(roots)))
    return StabilityReport(min_mod > 1.0 + TOL_ROOT, min_mod)


@dataclass(frozen=True)
class ArxSystem:
    """Immutable ARX system description.

    ``noise_std`` is the standard deviation of the i.i.d. Gaussian
    disturbance d_k.
    """

    a_coeffs: np.ndarray
    b_coeffs: np.ndarray
    noise_std: float

    def __post_init__(self):
        object.__setattr__(
            self, "a_coeffs", _float_vector(self.a_coeffs, "a_coeffs", MAX_ORDER)
        )
        object.__setattr__(
            self, "b_coeffs", _float_vector(self.b_coeffs, "b_coeffs", MAX_ORDER)
        )
        if self.a_coeffs.size + self.b_coeffs.size < 1:
            raise ValueError("system must have at least one parameter (m + n >= 1)")
        std = float(self.noise_std)
        if not (math.isfinite(std) and std >= 0.0):
            raise ValueError("noise_std must be finite and >= 0")
        object.__setattr__(self, "noise_std", std)

    @property
    def m(self) -> int:
        return int(self.a_coeffs.size)

    @property
    def n(self) -> int:
        return int(self.b_coeffs.size)

    @property
    def dim(self) -> int:
        return self.m + self.n

    @property
    def theta(self) -> np.ndarray:
        """True parameter vector [a_1..a_m, b_1..b_n]'."""
        return np.concatenate([self.a_coeffs, self.b_coeffs])

    def stability(self) -> StabilityReport:
        return check_stability(self.a_coeffs)


@dataclass(frozen=True)
class DeterministicSignal:
    """Bounded deterministic reference r_k, defined for k >= 0.

    Kinds: ``"zero"``, ``"constant"`` (uses ``level``), and ``"sinusoid"``
    (``amplitude * cos(omega * k)``).
    """

    kind: str = "sinusoid"
    amplitude: float = 1.0
    omega: float = 1.7
    level: float = 0.0

    _KINDS = ("zero", "constant", "sinusoid")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown deterministic signal kind {self.kind!r}")
        for name in ("amplitude", "omega", "level"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    def sample(self, k) -> np.ndarray:
        """Evaluate r_k on an integer index array (entries must be >= 0)."""
        k = np.asarray(k)
        if k.size and int(k.min()) < 0:
            raise ValueError("deterministic signal is only defined for k >= 0")
        if self.kind == "zero":
            return np.zeros(k.shape, dtype=np.float64)
        if self.kind == "constant":
            return np.full(k.shape, self.level, dtype=np.float64)
        return self.amplitude * np.cos(self.omega * k.astype(np.float64))


@dataclass(frozen=True)
class SignalGeneratorSpec:
    """Filtered-excitation input description.

    The input applied to the plant is

        u_k = sum_i input_filter[i] * r_{k-i}
            + sum_i noise_feedthrough[i] * e_{k-i}

    where r is the deterministic reference, e is an i.i.d. zero-mean noise
    sequence with standard deviation ``e_std`` (``"gaussian"`` or bounded
    ``"uniform"``), and both sequences vanish for k < 0.  Filter lengths are
    capped by ``truncation_length`` + 1 taps.
    """

    deterministic: DeterministicSignal = field(default_factory=DeterministicSignal)
    input_filter: np.ndarray = (1.0,)
    noise_feedthrough: np.ndarray = (1.0,)
    e_std: float = 1.0
    e_distribution: str = "gaussian"
    truncation_length: int = 64

    def __post_init__(self):
        trunc = int(self.truncation_length)
        if trunc < 0:
            raise ValueError("truncation_length must be >= 0")
        object.__setattr__(self, "truncation_length", trunc)
        object.__setattr__(
            self,
            "input_filter",
            _float_vector(self.input_filter, "input_filter", trunc + 1),
        )
        object.__setattr__(
            self,
            "noise_feedthrough",
            _float_vector(self.noise_feedthrough, "noise_feedthrough", trunc + 1),
        )
        std = float(self.e_std)
        if not (math.isfinite(std) and std > 0.0):
            raise ValueError("e_std must be finite and > 0")
        object.__setattr__(self, "e_std", std)
        if self.e_distribution not in ("gaussian", "uniform"):
            raise ValueError(f"unknown e_distribution {self.e_distribution!r}")

    @property
    def filter_l1_norms(self) -> tuple[float, float]:
        """(sum|input_filter|, sum|noise_feedthrough|) — both finite by
        construction, which keeps the generated input's moments bounded."""
        return (
            float(np.sum(np.abs(self.input_filter))),
            float(np.sum(np.abs(self.noise_feedthrough))),
        )

    def draw_noise(self, count, rng) -> np.ndarray:
        """Draw e_0..e_{count-1} from the configured distribution."""
        if self.e_distribution == "gaussian":
            return self.e_std * rng.standard_normal(count)
        # uniform on +-sqrt(3)*std has variance std^2
        half = _SQRT3 * self.e_std
        return rng.uniform(-half, half, count)


def generate_input(spec: SignalGeneratorSpec, horizon, seed) -> np.ndarray:
    """Generate u_0..u_K for K = ``horizon`` (so the result has K+1 samples).

    Empty filters contribute nothing; with a zero reference and a zero
    feedthrough filter the input is identically zero.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = as_generator(seed)
    count = horizon + 1
    u = np.zeros(count, dtype=np.float64)
    if spec.input_filter.size:
        r = spec.deterministic.sample(np.arange(count))
        u += np.convolve(r, spec.input_filter)[:count]
    if spec.noise_feedthrough.size:
        e = spec.draw_noise(count, rng)
        u += np.convolve(e, spec.noise_feedthrough)[:count]
    return u


@dataclass(frozen=True)
class Trajectory:
    """One simulated record: outputs y_1..y_K, inputs u_0..u_K, and (when
    available) the disturbances d_1..d_K that produced the outputs."""

    y: np.ndarray
    u: np.ndarray
    d: np.ndarray | None = None

    def __post_init__(self):
        y = _float_vector(self.y, "y", allow_empty=False)
        u = _float_vector(self.u, "u", allow_empty=False)
        if u.size != y.size + 1:
            raise ValueError("u must have exactly one more sample than y")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "u", u)
        if self.d is not None:
            d = _float_vector(self.d, "d")
            if d.size != y.size:
                raise ValueError("d must have the same length as y")
            object.__setattr__(self, "d", d)

    @property
    def horizon(self) -> int:
        return int(self.y.size)

    def y_at(self, k) -> float:
        """y_k with the zero-initial convention (y_k = 0 for k <= 0)."""
        return float(self.y[k - 1]) if k >= 1 else 0.0

    def u_at(self, k) -> float:
        """u_k with the zero-initial convention (u_k = 0 for k < 0)."""
        return float(self.u[k]) if k >= 0 else 0.0

    def residuals(self, system: ArxSystem) -> np.ndarray:
        """y minus the outputs rebuilt from (u, d) through the recursion.

        Exactly zero (bitwise) when this trajectory came from ``simulate``
        with the same system, because the identical kernel rebuilds it.
        """
        if self.d is None:
            raise ValueError("residuals need the disturbance record d")
        rebuilt = _kernels.simulate_outputs(
            system.a_coeffs, system.b_coeffs, self.u, self.d
        )
        return self.y - rebuilt

    def to_csv(self, path) -> None:
        """Write the record as CSV with header ``k,y,u,d``.

        Row k = 0 carries u_0 (y and d are written as 0 there, matching the
        zero-initial convention); rows 1..K carry y_k, u_k, d_k.  Floats are
        written with ``repr`` so reading the file back round-trips exactly.
        """
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "y", "u", "d"])
            writer.writerow(["0", repr(0.0), repr(float(self.u[0])), repr(0.0)])
            have_d = self.d is not None
            for k in range(1, self.horizon + 1):
                writer.writerow(
                    [
                        str(k),
                        repr(float(self.y[k - 1])),
                        repr(float(self.u[k])),
                        repr(float(self.d[k - 1])) if have_d else "",
                    ]
                )

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        """Read a record written by ``to_csv`` (bit-exact round trip)."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["k", "y", "u", "d"]:
                raise ValueError(f"unexpected trajectory header: {header!r}")
            rows = [row for row in reader if row]
        if len(rows) < 2:
            raise ValueError("trajectory file must contain rows for k = 0 and k = 1")
        big_k = len(rows) - 1
        y = np.empty(big_k)
        u = np.empty(big_k + 1)
        d = np.empty(big_k)
        have_d = True
        for idx, row in enumerate(rows):
            if int(row[0]) != idx:
                raise ValueError("trajectory rows must be consecutive from k = 0")
            u[idx] = float(row[2])
            if idx >= 1:
                y[idx - 1] = float(row[1])
                if row[3] == "":
                    have_d = False
                else:
                    d[idx - 1] = float(row[3])
        return cls(y=y, u=u, d=d if have_d else None)


def simulate(system: ArxSystem, u, seed, *, allow_zero_noise=False) -> Trajectory:
    """Simulate y_1..y_K for the input record u_0..u_K.

    The disturbances d_1..d_K are drawn i.i.d. N(0, noise_std^2) from
    ``seed``.  Refuses unstable systems (UnstableSystemError) and, unless
    ``allow_zero_noise`` is set, refuses noise_std == 0 — noiseless records
    are for diagnostics only.
    """
    report = check_stability(system.a_coeffs)
    if not report.stable:
        raise UnstableSystemError(
            "A(z) has a root of modulus "
            f"{report.min_root_modulus:.6g} inside the stability margin"
        )
    if system.noise_std == 0.0 and not allow_zero_noise:
        raise ValueError("noise_std == 0 requires allow_zero_noise=True")
    u = _float_vector(u, "u", allow_empty=False)
    if u.size < 2:
        raise ValueError("need inputs u_0..u_K with K >= 1")
    rng = as_generator(seed)
    big_k = u.size - 1
    d = system.noise_std * rng.standard_normal(big_k)
    y = _kernels.simulate_outputs(system.a_coeffs, system.b_coeffs, u, d)
    return Trajectory(y=y, u=u, d=d)


def build_regressor(trajectory: Trajectory, k, m, n) -> np.ndarray:
    """phi_k = [-y_{k-1}..-y_{k-m}, u_{k-1}..u_{k-n}]' for 1 <= k <= K."""
    k = int(k)
    m = int(m)
    n = int(n)
    if not 1 <= k <= trajectory.horizon:
        raise ValueError("k must lie in 1..horizon")
    if m < 0 or n < 0 or m + n < 1:
        raise ValueError("orders must be nonnegative with m + n >= 1")
    phi = np.empty(m + n)
    for i in range(1, m + 1):
        phi[i - 1] = -trajectory.y_at(k - i)
    for j in range(1, n + 1):
        phi[m + j - 1] = trajectory.u_at(k - j)
    return phi


def regressor_matrix(y, u, m, n, k) -> np.ndarray:
    """Stack phi_1' .. phi_k' into a (k, m+n) matrix.

    Built by slicing zero-padded copies of y and u, so it agrees entrywise
    with ``build_regressor`` at every step.
    """
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    k = int(k)
    m = int(m)
    n = int(n)
    if not 1 <= k <= y.size:
        raise ValueError("k must lie in 1..len(y)")
    if m < 0 or n < 0 or m + n < 1:
        raise ValueError("orders must be nonnegative with m + n >= 1")
    out = np.empty((k, m + n))
    ypad = np.concatenate([np.zeros(m), y])
    for i in range(1, m + 1):
        out[:, i - 1] = -ypad[m - i : m - i + k]
    upad = np.concatenate([np.zeros(max(n - 1, 0)), u])
    pad = max(n - 1, 0)
    for j in range(1, n + 1):
        out[:, m + j - 1] = upad[pad + 1 - j : pad + 1 - j + k]
    return out

"""Monte Carlo efficiency metrics.

Everything here reduces raw per-run quantities (parameter errors, regressor
Grams, lag-product partial sums) to the statistics the theory speaks about:

* the Cramer-Rao style lower bound sigma_CR(k) = noise_var * (sum_{l<=k}
  E[phi phi'])^{-1} and its k-scaled limit,
* the empirical covariance of sqrt(k)-scaled errors and its distance to
  that bound,
* one-dimensional Kolmogorov-Smirnov normality checks of the scaled errors
  along chosen directions,
* log-log power-law fits of error moments E||theta_tilde_k||^p, and
* deviation statistics Y_k = S_k - mean(S_k) of lag-product partial sums
  S_k = sum_{l<=k} y_l y_{l-tau}, with their even moments and the Markov
  tail envelope P(|Y_k| > k eps) <= E[Y_k^{2 gamma}] / (k eps)^{2 gamma}.

Cross-run reductions use pairwise summation (``np.mean`` / ``np.sum``), so
results are invariant to run ordering up to a relative error far below any
tolerance used in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import regressor_matrix
from .stationary import DegenerateExcitationError

#: Minimum Monte Carlo sample sizes for each statistic.
MIN_RUNS_CRLB = 30
MIN_RUNS_COVARIANCE = 100
MIN_RUNS_NORMALITY = 500
MIN_RUNS_DEVIATION = {1: 500, 2: 2000}
MIN_RUNS_TAIL = 1000

#: Minimum number of grid points for a power-law fit.
MIN_GRID_POINTS = 5

#: One-sample KS critical value scale at significance 0.01 (asymptotic).
KS_CRITICAL_SCALE = 1.63


def _grid(k_grid) -> np.ndarray:
    grid = np.asarray(k_grid, dtype=np.int64)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("k_grid must be a nonempty 1-d array")
    if grid[0] < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("k_grid must be strictly increasing and >= 1")
    return grid


@dataclass(frozen=True)
class McErrorPanel:
    """Per-run parameter errors theta_tilde = theta_hat - theta, snapshotted
    on a common step grid: ``errors[r, s]`` is run r's error at k_grid[s]."""

    k_grid: np.ndarray
    errors: np.ndarray

    def __post_init__(self):
        grid = _grid(self.k_grid)
        errors = np.asarray(self.errors, dtype=np.float64)
        if errors.ndim != 3 or errors.shape[1] != grid.size:
            raise ValueError("errors must have shape (runs, len(k_grid), dim)")
        if not np.all(np.isfinite(errors)):
            raise ValueError("errors contain non-finite entries")
        object.__setattr__(self, "k_grid", grid)
        object.__setattr__(self, "errors", errors)

    @property
    def runs(self) -> int:
        return int(self.errors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.errors.shape[2])

    def scaled(self, index) -> np.ndarray:
        """sqrt(k_grid[index]) * errors[:, index, :] — the CLT scaling."""
        return math.sqrt(float(self.k_grid[index])) * self.errors[:, index, :]


@dataclass(frozen=True)
class CrlbEstimate:
    """sigma_CR(k) estimated from run-averaged regressor Grams."""

    sigma_cr: np.ndarray
    k: int
    runs_used: int

    @property
    def k_scaled(self) -> np.ndarray:
        """k * sigma_CR(k), the quantity with a finite nonzero limit."""
        return self.k * self.sigma_cr


def crlb_from_gram(mean_gram, noise_var, k, runs_used) -> CrlbEstimate:
    """Build sigma_CR(k) = noise_var * mean_gram^{-1} from an averaged Gram
    sum_{l<=k} phi_l phi_l'.  Raises DegenerateExcitationError when the
    Gram is not positive definite."""
    mean_gram = np.asarray(mean_gram, dtype=np.float64)
    noise_var = float(noise_var)
    if noise_var <= 0.0:
        raise ValueError("noise_var must be > 0")
    try:
        chol = np.linalg.cholesky(mean_gram)
    except np.linalg.LinAlgError:
        raise DegenerateExcitationError(
            "averaged regressor Gram is not positive definite"
        ) from None
    inv_chol = np.linalg.inv(chol)
    sigma = noise_var * (inv_chol.T @ inv_chol)
    sigma = 0.5 * (sigma + sigma.T)
    return CrlbEstimate(sigma, int(k), int(runs_used))


def crlb(runs, k, noise_var, m, n) -> CrlbEstimate:
    """Estimate sigma_CR(k) from trajectories (>= MIN_RUNS_CRLB of them).

    The per-run Grams are stacked and averaged with pairwise summation, so
    permuting the runs changes nothing beyond ~1e-15 relative error.
    """
    k = int(k)
    grams = []
    for trajectory in runs:
        phi_mat = regressor_matrix(trajectory.y, trajectory.u, m, n, k)
        grams.append(phi_mat.T @ phi_mat)
    if len(grams) < MIN_RUNS_CRLB:
        raise ValueError(f"need at least {MIN_RUNS_CRLB} runs, got {len(grams)}")
    mean_gram = np.mean(np.stack(grams, axis=0), axis=0)
    return crlb_from_gram(mean_gram, noise_var, k, len(grams))


def empirical_covariance(scaled) -> np.ndarray:
    """Second-moment matrix (1/R) sum_r x_r x_r' of scaled errors at one k.

    No mean subtraction: the reference bound is a second-moment limit.
    Requires >= MIN_RUNS_COVARIANCE rows.
    """
    scaled = np.asarray(scaled, dtype=np.float64)
    if scaled.ndim != 2:
        raise ValueError("scaled must be (runs, dim)")
    if scaled.shape[0] < MIN_RUNS_COVARIANCE:
        raise ValueError(
            f"need at least {MIN_RUNS_COVARIANCE} runs, got {scaled.shape[0]}"
        )
    cov = scaled.T @ scaled / scaled.shape[0]
    return 0.5 * (cov + cov.T)


def covariance_gap(candidate, reference) -> float:
    """Relative Frobenius gap ||C - R||_F / ||R||_F."""
    candidate = np.asarray(candidate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    denom = float(np.linalg.norm(reference))
    if denom == 0.0:
        raise ValueError("reference matrix must be nonzero")
    return float(np.linalg.norm(candidate - reference)) / denom


def normality_directions(model_cov) -> np.ndarray:
    """Test directions: the coordinate axes plus the dominant eigenvector
    of the model covariance (sign-stabilized), stacked as rows."""
    model_cov = np.asarray(model_cov, dtype=np.float64)
    dim = model_cov.shape[0]
    directions = list(np.eye(dim))
    _, vecs = np.linalg.eigh(model_cov)
    dominant = vecs[:, -1]
    lead = dominant[np.argmax(np.abs(dominant))]
    if lead < 0:
        dominant = -dominant
    directions.append(dominant)
    return np.asarray(directions)


@dataclass(frozen=True)
class NormalityResult:
    """One-sample KS test of scaled errors projected on a direction."""

    ks_statistic: float
    critical_value: float
    passed: bool
    n_samples: int


def normality_test(scaled, direction, model_cov) -> NormalityResult:
    """KS-test direction' x_r / sqrt(direction' model_cov direction) against
    the standard normal.  ``direction`` must be a unit vector; requires
    >= MIN_RUNS_NORMALITY samples.  The critical value is 1.63 / sqrt(R)
    (significance 0.01)."""
    scaled = np.asarray(scaled, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if scaled.ndim != 2:
        raise ValueError("scaled must be (runs, dim)")
    n_samples = scaled.shape[0]
    if n_samples < MIN_RUNS_NORMALITY:
        raise ValueError(
            f"need at least {MIN_RUNS_NORMALITY} runs, got {n_samples}"
        )
    if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-8:
        raise ValueError("direction must be a unit vector")
    variance = float(direction @ np.asarray(model_cov, dtype=np.float64) @ direction)
    if variance <= 0.0:
        raise ValueError("model covariance has no variance along this direction")
    z = (scaled @ direction) / math.sqrt(variance)
    ks_statistic = float(stats.kstest(z, "norm").statistic)
    critical = KS_CRITICAL_SCALE / math.sqrt(n_samples)
    return NormalityResult(ks_statistic, critical, ks_statistic < critical, n_samples)


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of ln(value) = slope * ln(k) + intercept."""

    slope: float
    intercept: float
    r_squared: float


def fit_power_law(k_grid, values) -> RateFit:
    """Fit a power law through (k, value) pairs on log-log axes.

    Requires >= MIN_GRID_POINTS strictly positive values.  A constant
    series fits exactly with slope 0 and r^2 = 1 by convention.
    """
    grid = _grid(k_grid)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != grid.shape:
        raise ValueError("values must match k_grid in shape")
    if grid.size < MIN_GRID_POINTS:
        raise ValueError(f"need at least {MIN_GRID_POINTS} grid points")
    if not np.all(values > 0.0) or not np.all(np.isfinite(values)):
        raise ValueError("values must be finite and > 0 for a log-log fit")
    if np.all(values == values[0]):
        return RateFit(0.0, float(np.log(values[0])), 1.0)
    log_k = np.log(grid.astype(np.float64))
    log_v = np.log(values)
    slope, intercept = np.polyfit(log_k, log_v, 1)
    fitted = slope * log_k + intercept
    ss_res = float(np.sum((log_v - fitted) ** 2))
    ss_tot = float(np.sum((log_v - np.mean(log_v)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(float(slope), float(intercept), float(r_squared))


def error_moment_curve(panel: McErrorPanel, exponent):
    """Per-k mean of ||theta_tilde_k||^exponent and its standard error."""
    exponent = float(exponent)
    if exponent <= 0.0:
        raise ValueError("exponent must be > 0")
    norms = np.linalg.norm(panel.errors, axis=2) ** exponent  # (R, S)
    means = np.mean(norms, axis=0)
    if panel.runs > 1:
        se = np.std(norms, axis=0, ddof=1) / math.sqrt(panel.runs)
    else:
        se = np.full(means.shape, np.nan)
    return means, se


def moment_rate(panel: McErrorPanel, exponent) -> RateFit:
    """Power-law fit of E||theta_tilde_k||^exponent over the panel's grid."""
    means, _ = error_moment_curve(panel, exponent)
    return fit_power_law(panel.k_grid, means)


def deviation_matrix(partial_sums) -> np.ndarray:
    """Center lag-product partial sums across runs: Y = S - mean_runs(S).

    ``partial_sums[r, s]`` holds run r's sum_{l<=k_grid[s]} y_l y_{l-tau}.
    The column mean is this experiment's stand-in for E[S_k].
    """
    sums = np.asarray(partial_sums, dtype=np.float64)
    if sums.ndim != 2:
        raise ValueError("partial_sums must be (runs, len(k_grid))")
    return sums - np.mean(sums, axis=0)


def deviation_moment_rate(k_grid, partial_sums, gamma) -> RateFit:
    """Power-law fit of the even deviation moments E[Y_k^{2 gamma}].

    The theory puts these at O(k^gamma); the fitted slope estimates that
    exponent directly.  gamma must be 1 or 2, with minimum run counts
    MIN_RUNS_DEVIATION[gamma].
    """
    gamma = int(gamma)
    if gamma not in MIN_RUNS_DEVIATION:
        raise ValueError("gamma must be 1 or 2 for deviation moments")
    grid = _grid(k_grid)
    dev = deviation_matrix(partial_sums)
    if dev.shape[0] < MIN_RUNS_DEVIATION[gamma]:
        raise ValueError(
            f"need at least {MIN_RUNS_DEVIATION[gamma]} runs for gamma={gamma}"
        )
    if dev.shape[1] != grid.size:
        raise ValueError("partial_sums columns must match k_grid")
    moments = np.mean(dev ** (2 * gamma), axis=0)
    if not np.all(moments > 0.0):
        raise ValueError("degenerate deviations: some moment is zero")
    return fit_power_law(grid, moments)


@dataclass(frozen=True)
class TailReport:
    """Empirical tail frequencies of |Y_k| > k*eps next to their Markov
    envelopes E[Y_k^{2 gamma}] / (k eps)^{2 gamma}, per grid point.

    Both statistics are taken over the same runs, so the envelope holds
    pointwise by Markov's inequality applied to the empirical measure —
    any violation indicates a bug, not bad luck.
    """

    k_grid: np.ndarray
    empirical: np.ndarray
    markov_bound: np.ndarray
    epsilon: float
    gamma: int


def tail_probability(k_grid, partial_sums, epsilon, gamma=1) -> TailReport:
    """Tail frequencies P(|Y_k| > k eps) and their Markov envelopes.

    Requires >= MIN_RUNS_TAIL runs and epsilon > 0.
    """
    grid = _grid(k_grid)
    epsilon = float(epsilon)
    if epsilon <= 0.0:
        raise ValueError("epsilon must be > 0")
    gamma = int(gamma)
    if gamma not in MIN_RUNS_DEVIATION:
        raise ValueError("gamma must be 1 or 2")
    dev = deviation_matrix(partial_sums)
    if dev.shape[0] < MIN_RUNS_TAIL:
        raise ValueError(f"need at least {MIN_RUNS_TAIL} runs, got {dev.shape[0]}")
    if dev.shape[1] != grid.size:
        raise ValueError("partial_sums columns must match k_grid")
    thresholds = grid.astype(np.float64) * epsilon
    empirical = np.mean(np.abs(dev) > thresholds, axis=0)
    moments = np.mean(dev ** (2 * gamma), axis=0)
    markov = moments / thresholds ** (2 * gamma)
    return TailReport(grid, empirical, markov, epsilon, gamma)

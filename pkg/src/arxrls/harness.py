"""Monte Carlo harness: deterministic parallel execution, per-run CSV
persistence, and aggregation into the summary statistics.

Execution model
---------------
Every run is a pure function of ``(config, run_id)``: the run's RNG is a
Philox stream keyed by ``(master_seed, run_id)`` and nothing else, so
results are independent of worker count and submission order, and an
interrupted experiment resumes by executing only the missing run files.
Two reserved ids far above any real run hold the pilot record (excitation
check) and the long stationary record (covariance table).

Aggregation is separated into ``analyze``, which reads only what is on
disk; ``run_experiment`` finishes by calling it, so the summary written
during an experiment and the summary recomputed later from the same
directory are byte-identical.
"""

from __future__ import annotations

import csv
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, config_to_dict, dump_config, load_config
from .efficiency import (
    MIN_RUNS_CRLB,
    MIN_RUNS_COVARIANCE,
    MIN_RUNS_DEVIATION,
    MIN_RUNS_NORMALITY,
    MIN_RUNS_TAIL,
    MIN_GRID_POINTS,
    CrlbEstimate,
    McErrorPanel,
    NormalityResult,
    RateFit,
    TailReport,
    covariance_gap,
    crlb_from_gram,
    deviation_matrix,
    empirical_covariance,
    error_moment_curve,
    fit_power_law,
    normality_directions,
    normality_test,
)
from .estimator import run_rls
from .model import Trajectory, generate_input, regressor_matrix, simulate
from .seeding import run_generator
from .stationary import (
    CovarianceTable,
    DegenerateExcitationError,
    ExcitationMatrix,
    build_excitation_matrix,
    check_persistent_excitation,
    default_eps_pd,
    estimate_covariances,
)

RUNS_DIR = "runs"
CONFIG_NAME = "config.json"
SUMMARY_NAME = "summary.json"
COVARIANCES_NAME = "covariances.csv"
RATES_NAME = "rates.csv"

#: Reserved run ids for the auxiliary records (outside any real run range).
PILOT_RUN_ID = 2**48
STATIONARY_RUN_ID = 2**48 + 1

#: Error-norm moment exponents aggregated by every experiment.
ERROR_MOMENT_EXPONENTS = (1.0, 2.0)

_PILOT_FLOOR = 512


def worker_count(explicit=None) -> int:
    """Worker processes to use: explicit argument, else the
    ``ARXRLS_THREADS`` environment variable, else the CPU count."""
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("ARXRLS_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RunRecord:
    """Everything one run contributes to the aggregate statistics,
    snapshotted on the experiment's step grid."""

    run_id: int
    master_seed: int
    k_grid: np.ndarray
    theta_hat: np.ndarray  # (S, dim)
    theta_tilde: np.ndarray  # (S, dim)
    trace_p: np.ndarray  # (S,)
    gram: np.ndarray  # (S, dim, dim): sum_{l<=k} phi_l phi_l'
    lag_sums: dict  # tau -> (S,): sum_{l<=k} y_l y_{l-tau}


def execute_run(config: ExperimentConfig, run_id: int) -> RunRecord:
    """Simulate one run and reduce it to its RunRecord.

    Draw order within the run's stream is fixed: input noise e first, then
    disturbances d.
    """
    rng = run_generator(config.master_seed, run_id)
    big_k = config.k_grid[-1]
    u = generate_input(config.input, big_k, rng)
    trajectory = simulate(config.system, u, rng)
    system = config.system
    trace = run_rls(
        trajectory, system.m, system.n, config.estimator, snapshot_ks=config.k_grid
    )
    theta_tilde = trace.theta_hats - system.theta[None, :]
    phi_mat = regressor_matrix(trajectory.y, trajectory.u, system.m, system.n, big_k)
    dim = system.dim
    gram = np.empty((len(config.k_grid), dim, dim))
    running = np.zeros((dim, dim))
    prev = 0
    for s, k in enumerate(config.k_grid):
        seg = phi_mat[prev:k]
        running = running + seg.T @ seg
        gram[s] = running
        prev = k
    grid_idx = np.asarray(config.k_grid, dtype=np.int64) - 1
    lag_sums = {}
    y = trajectory.y
    for tau in config.taus:
        prod = np.zeros(big_k)
        if tau < big_k:
            prod[tau:] = y[tau:] * y[: big_k - tau]
        lag_sums[tau] = np.cumsum(prod)[grid_idx]
    return RunRecord(
        run_id=run_id,
        master_seed=config.master_seed,
        k_grid=np.asarray(config.k_grid, dtype=np.int64),
        theta_hat=trace.theta_hats,
        theta_tilde=theta_tilde,
        trace_p=trace.trace_p,
        gram=gram,
        lag_sums=lag_sums,
    )


def _triangle_pairs(dim):
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def write_run_record(path, record: RunRecord) -> None:
    """Persist a RunRecord as CSV (repr floats, hence exact round trips).

    Layout: two comment lines (# run_id, # master_seed), then one row per
    grid point with the estimate, the error, trace(P), the Gram upper
    triangle, and one lag-sum column per tau.
    """
    path = Path(path)
    dim = record.theta_hat.shape[1]
    taus = sorted(record.lag_sums)
    header = (
        ["k"]
        + [f"theta_hat_{i + 1}" for i in range(dim)]
        + [f"theta_tilde_{i + 1}" for i in range(dim)]
        + ["trace_P"]
        + [f"gram_{i + 1}_{j + 1}" for i, j in _triangle_pairs(dim)]
        + [f"lag_sum_tau_{tau}" for tau in taus]
    )
    with path.open("w", newline="") as fh:
        fh.write(f"# run_id: {record.run_id}\n")
        fh.write(f"# master_seed: {record.master_seed}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for s, k in enumerate(record.k_grid):
            row = [str(int(k))]
            row += [repr(float(v)) for v in record.theta_hat[s]]
            row += [repr(float(v)) for v in record.theta_tilde[s]]
            row.append(repr(float(record.trace_p[s])))
            row += [repr(float(record.gram[s, i, j])) for i, j in _triangle_pairs(dim)]
            row += [repr(float(record.lag_sums[tau][s])) for tau in taus]
            writer.writerow(row)


def read_run_record(path) -> RunRecord:
    """Read a RunRecord written by ``write_run_record``."""
    path = Path(path)
    run_id = None
    master_seed = None
    rows = []
    with path.open(newline="") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                key, _, value = stripped.lstrip("# ").partition(":")
                if key.strip() == "run_id":
                    run_id = int(value)
                elif key.strip() == "master_seed":
                    master_seed = int(value)
                continue
            rows.append(next(csv.reader([stripped])))
    if run_id is None or master_seed is None or len(rows) < 2:
        raise ValueError(f"malformed run record: {path}")
    header, body = rows[0], rows[1:]
    dim = sum(1 for name in header if name.startswith("theta_hat_"))
    taus = [
        int(name.rsplit("_", 1)[1])
        for name in header
        if name.startswith("lag_sum_tau_")
    ]
    pairs = _triangle_pairs(dim)
    n_rows = len(body)
    k_grid = np.empty(n_rows, dtype=np.int64)
    theta_hat = np.empty((n_rows, dim))
    theta_tilde = np.empty((n_rows, dim))
    trace_p = np.empty(n_rows)
    gram = np.empty((n_rows, dim, dim))
    lag_sums = {tau: np.empty(n_rows) for tau in taus}
    col = {name: idx for idx, name in enumerate(header)}
    for s, row in enumerate(body):
        k_grid[s] = int(row[col["k"]])
        for i in range(dim):
            theta_hat[s, i] = float(row[col[f"theta_hat_{i + 1}"]])
            theta_tilde[s, i] = float(row[col[f"theta_tilde_{i + 1}"]])
        trace_p[s] = float(row[col["trace_P"]])
        for i, j in pairs:
            v = float(row[col[f"gram_{i + 1}_{j + 1}"]])
            gram[s, i, j] = v
            gram[s, j, i] = v
        for tau in taus:
            lag_sums[tau][s] = float(row[col[f"lag_sum_tau_{tau}"]])
    return RunRecord(
        run_id=run_id,
        master_seed=master_seed,
        k_grid=k_grid,
        theta_hat=theta_hat,
        theta_tilde=theta_tilde,
        trace_p=trace_p,
        gram=gram,
        lag_sums=lag_sums,
    )


def run_path(output_dir, run_id) -> Path:
    return Path(output_dir) / RUNS_DIR / f"run_{run_id}.csv"


def _execute_and_write(args) -> int:
    config, run_id, path_str = args
    record = execute_run(config, run_id)
    tmp = Path(path_str + ".tmp")
    write_run_record(tmp, record)
    os.replace(tmp, path_str)
    return run_id


def pilot_horizon(config: ExperimentConfig) -> int:
    """Length of the pilot record used for the excitation pre-check."""
    return max(config.k_grid[-1] // 4, _PILOT_FLOOR, 8 * (config.tau_window + 1))


def pilot_excitation(config: ExperimentConfig) -> ExcitationMatrix:
    """Simulate the short pilot record and build its excitation matrix."""
    rng = run_generator(config.master_seed, PILOT_RUN_ID)
    u = generate_input(config.input, pilot_horizon(config), rng)
    trajectory = simulate(config.system, u, rng)
    table = estimate_covariances(trajectory, config.tau_window)
    return build_excitation_matrix(table, config.system.m, config.system.n)


def stationary_table(config: ExperimentConfig) -> CovarianceTable:
    """Covariance table from the single long stationary reference record."""
    rng = run_generator(config.master_seed, STATIONARY_RUN_ID)
    u = generate_input(config.input, config.stationary_horizon, rng)
    trajectory = simulate(config.system, u, rng)
    return estimate_covariances(trajectory, config.tau_window)


def run_experiment(config: ExperimentConfig, workers=None) -> "McSummary":
    """Execute (or resume) an experiment and return its summary.

    Order of operations: validate stability, check excitation on a short
    pilot record (both abort before any run is spent), write the canonical
    config and the stationary covariance table, execute the missing runs,
    then delegate to ``analyze`` — so the returned summary is by
    construction identical to a later re-analysis of the directory.
    """
    report = config.system.stability()
    if not report.stable:
        from .model import UnstableSystemError

        raise UnstableSystemError(
            f"A(z) root modulus {report.min_root_modulus:.6g} violates the margin"
        )
    excitation = pilot_excitation(config)
    if not check_persistent_excitation(excitation):
        raise DegenerateExcitationError(
            f"pilot excitation matrix min eigenvalue {excitation.min_eigenvalue:.3g} "
            f"is below the floor {default_eps_pd(excitation.matrix):.3g}; "
            "the configured input cannot identify this system"
        )
    out = Path(config.output_dir)
    runs_dir = out / RUNS_DIR
    runs_dir.mkdir(parents=True, exist_ok=True)
    config_path = out / CONFIG_NAME
    if config_path.exists():
        existing = config_to_dict(load_config(config_path))
        if existing != config_to_dict(config):
            raise ConfigError(
                f"{config_path} belongs to a different experiment; "
                "refusing to mix results in one directory"
            )
    else:
        dump_config(config, config_path)
    cov_path = out / COVARIANCES_NAME
    if not cov_path.exists():
        stationary_table(config).to_csv(cov_path)
    pending = [
        run_id for run_id in range(config.runs) if not run_path(out, run_id).exists()
    ]
    n_workers = worker_count(workers)
    if pending:
        jobs = [
            (config, run_id, str(run_path(out, run_id))) for run_id in pending
        ]
        if n_workers == 1 or len(pending) == 1:
            for job in jobs:
                _execute_and_write(job)
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                for _ in pool.map(_execute_and_write, jobs, chunksize=8):
                    pass
    return analyze(out)


@dataclass(frozen=True)
class DeviationSummary:
    """Deviation statistics of one lag's output-product partial sums."""

    tau: int
    moments: np.ndarray  # E[Y_k^{2 gamma}] per grid point
    moment_ses: np.ndarray
    rate: RateFit | None
    tail: TailReport | None


@dataclass(frozen=True)
class McSummary:
    """Aggregate view of one experiment directory.

    Sections whose minimum run counts are not met are None; everything
    else is a deterministic function of the run records on disk.
    """

    config: ExperimentConfig
    k_grid: np.ndarray
    k_ref: int
    excitation: ExcitationMatrix
    excited: bool
    eps_pd: float
    model_covariance: np.ndarray
    moment_means: dict  # exponent -> (S,)
    moment_ses: dict
    moment_fits: dict  # exponent -> RateFit | None
    mean_trace_p: np.ndarray
    crlb_at_ref: CrlbEstimate | None
    empirical_covariance_at_ref: np.ndarray | None
    gap_empirical_vs_crlb: float | None
    gap_crlb_vs_model: float | None
    normality: list | None  # list of (label, NormalityResult)
    deviations: list  # list of DeviationSummary

    def to_dict(self) -> dict:
        """JSON-ready digest (deterministic: plain floats and lists)."""

        def fit_dict(fit):
            if fit is None:
                return None
            return {
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
            }

        def matrix_list(mat):
            return None if mat is None else [[float(v) for v in row] for row in mat]

        normality = None
        if self.normality is not None:
            normality = [
                {
                    "direction": label,
                    "ks_statistic": res.ks_statistic,
                    "critical_value": res.critical_value,
                    "passed": res.passed,
                    "n_samples": res.n_samples,
                }
                for label, res in self.normality
            ]
        deviations = [
            {
                "tau": dev.tau,
                "moments": [float(v) for v in dev.moments],
                "rate": fit_dict(dev.rate),
                "tail_empirical": None
                if dev.tail is None
                else [float(v) for v in dev.tail.empirical],
                "tail_markov_bound": None
                if dev.tail is None
                else [float(v) for v in dev.tail.markov_bound],
                "tail_epsilon": None if dev.tail is None else dev.tail.epsilon,
            }
            for dev in self.deviations
        ]
        crlb_section = None
        if self.crlb_at_ref is not None:
            crlb_section = {
                "k": self.crlb_at_ref.k,
                "runs_used": self.crlb_at_ref.runs_used,
                "sigma_cr": matrix_list(self.crlb_at_ref.sigma_cr),
                "k_scaled": matrix_list(self.crlb_at_ref.k_scaled),
            }
        return {
            "schema_version": 1,
            "runs": self.config.runs,
            "gamma": self.config.gamma,
            "k_grid": [int(k) for k in self.k_grid],
            "k_ref": int(self.k_ref),
            "theta": [float(v) for v in self.config.system.theta],
            "noise_var": self.config.system.noise_std**2,
            "excitation_matrix": matrix_list(self.excitation.matrix),
            "excitation_min_eigenvalue": self.excitation.min_eigenvalue,
            "excited": bool(self.excited),
            "eps_pd": self.eps_pd,
            "model_covariance": matrix_list(self.model_covariance),
            "error_moments": {
                str(int(p)): {
                    "means": [float(v) for v in self.moment_means[p]],
                    "standard_errors": [float(v) for v in self.moment_ses[p]],
                    "fit": fit_dict(self.moment_fits[p]),
                }
                for p in sorted(self.moment_means)
            },
            "mean_trace_p": [float(v) for v in self.mean_trace_p],
            "crlb": crlb_section,
            "empirical_covariance": matrix_list(self.empirical_covariance_at_ref),
            "gap_empirical_vs_crlb": self.gap_empirical_vs_crlb,
            "gap_crlb_vs_model": self.gap_crlb_vs_model,
            "normality": normality,
            "deviations": deviations,
        }


def _load_records(out: Path, config: ExperimentConfig) -> list:
    records = []
    missing = []
    for run_id in range(config.runs):
        path = run_path(out, run_id)
        if not path.exists():
            missing.append(run_id)
            continue
        records.append(read_run_record(path))
    if missing:
        raise FileNotFoundError(
            f"{len(missing)} of {config.runs} run records missing "
            f"(first: run_{missing[0]}.csv); run the experiment to completion first"
        )
    grid = np.asarray(config.k_grid, dtype=np.int64)
    for rec in records:
        if rec.master_seed != config.master_seed:
            raise ValueError(
                f"run_{rec.run_id}.csv was produced under master_seed "
                f"{rec.master_seed}, config says {config.master_seed}"
            )
        if not np.array_equal(rec.k_grid, grid):
            raise ValueError(f"run_{rec.run_id}.csv uses a different k_grid")
    return records


def analyze(output_dir, workers=None) -> McSummary:
    """Aggregate a completed experiment directory.

    Reads config.json, covariances.csv, and the run records; writes
    summary.json and rates.csv; returns the summary.  Pure function of the
    directory contents (``workers`` is accepted for interface symmetry but
    aggregation is single-pass).
    """
    out = Path(output_dir)
    config = load_config(out / CONFIG_NAME)
    table = CovarianceTable.from_csv(out / COVARIANCES_NAME)
    system = config.system
    excitation = build_excitation_matrix(table, system.m, system.n)
    excited = check_persistent_excitation(excitation)
    noise_var = system.noise_std**2
    model_covariance = noise_var * np.linalg.inv(excitation.matrix)
    model_covariance = 0.5 * (model_covariance + model_covariance.T)
    records = _load_records(out, config)
    runs = len(records)
    grid = np.asarray(config.k_grid, dtype=np.int64)
    k_ref = config.resolved_k_ref
    s_ref = int(np.nonzero(grid == k_ref)[0][0])
    errors = np.stack([rec.theta_tilde for rec in records])
    panel = McErrorPanel(grid, errors)
    mean_trace_p = np.mean(np.stack([rec.trace_p for rec in records]), axis=0)

    moment_means = {}
    moment_ses = {}
    moment_fits = {}
    for p in ERROR_MOMENT_EXPONENTS:
        means, ses = error_moment_curve(panel, p)
        moment_means[p] = means
        moment_ses[p] = ses
        if grid.size >= MIN_GRID_POINTS and np.all(means > 0.0):
            moment_fits[p] = fit_power_law(grid, means)
        else:
            moment_fits[p] = None

    crlb_at_ref = None
    if runs >= MIN_RUNS_CRLB:
        mean_gram = np.mean(np.stack([rec.gram[s_ref] for rec in records]), axis=0)
        crlb_at_ref = crlb_from_gram(mean_gram, noise_var, k_ref, runs)

    empirical_cov = None
    gap_emp = None
    gap_model = None
    if runs >= MIN_RUNS_COVARIANCE:
        # scaled() rows are sqrt(k)*theta_tilde, so this is already k * Cov.
        empirical_cov = empirical_covariance(panel.scaled(s_ref))
        if crlb_at_ref is not None:
            gap_emp = covariance_gap(empirical_cov, crlb_at_ref.k_scaled)
            gap_model = covariance_gap(crlb_at_ref.k_scaled, model_covariance)

    normality = None
    if runs >= MIN_RUNS_NORMALITY:
        scaled_ref = panel.scaled(s_ref)
        labels = [f"axis_{i + 1}" for i in range(system.dim)] + ["dominant"]
        normality = [
            (label, normality_test(scaled_ref, direction, model_covariance))
            for label, direction in zip(labels, normality_directions(model_covariance))
        ]

    deviations = []
    for tau in config.taus:
        sums = np.stack([rec.lag_sums[tau] for rec in records])
        dev = deviation_matrix(sums)
        powered = dev ** (2 * config.gamma)
        moments = np.mean(powered, axis=0)
        if runs > 1:
            ses = np.std(powered, axis=0, ddof=1) / np.sqrt(runs)
        else:
            ses = np.full(moments.shape, np.nan)
        rate = None
        if (
            runs >= MIN_RUNS_DEVIATION[config.gamma]
            and grid.size >= MIN_GRID_POINTS
            and np.all(moments > 0.0)
        ):
            rate = fit_power_law(grid, moments)
        tail = None
        if runs >= MIN_RUNS_TAIL:
            thresholds = grid.astype(np.float64) * config.tail_epsilon
            tail_emp = np.mean(np.abs(dev) > thresholds, axis=0)
            markov = moments / thresholds ** (2 * config.gamma)
            tail = TailReport(grid, tail_emp, markov, config.tail_epsilon, config.gamma)
        deviations.append(DeviationSummary(tau, moments, ses, rate, tail))

    summary = McSummary(
        config=config,
        k_grid=grid,
        k_ref=k_ref,
        excitation=excitation,
        excited=excited,
        eps_pd=default_eps_pd(excitation.matrix),
        model_covariance=model_covariance,
        moment_means=moment_means,
        moment_ses=moment_ses,
        moment_fits=moment_fits,
        mean_trace_p=mean_trace_p,
        crlb_at_ref=crlb_at_ref,
        empirical_covariance_at_ref=empirical_cov,
        gap_empirical_vs_crlb=gap_emp,
        gap_crlb_vs_model=gap_model,
        normality=normality,
        deviations=deviations,
    )
    (out / SUMMARY_NAME).write_text(
        json.dumps(summary.to_dict(), sort_keys=True, indent=2) + "\n"
    )
    _write_rates_csv(out / RATES_NAME, summary, runs)
    return summary


def _write_rates_csv(path, summary: McSummary, runs: int) -> None:
    """Per-k curves: ``k,metric,value,ci_low,ci_high`` (95% normal CIs;
    bounds are left empty where no standard error is defined)."""
    z = 1.959963984540054  # two-sided 95% normal quantile
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "metric", "value", "ci_low", "ci_high"])

        def emit(metric, values, ses=None):
            for s, k in enumerate(summary.k_grid):
                value = float(values[s])
                if ses is None or not np.isfinite(ses[s]):
                    lo = hi = ""
                else:
                    lo = repr(value - z * float(ses[s]))
                    hi = repr(value + z * float(ses[s]))
                writer.writerow([str(int(k)), metric, repr(value), lo, hi])

        for p in sorted(summary.moment_means):
            emit(
                f"err_moment_p{int(p)}",
                summary.moment_means[p],
                summary.moment_ses[p],
            )
        emit("mean_trace_p", summary.mean_trace_p)
        for dev in summary.deviations:
            emit(
                f"deviation_moment_tau{dev.tau}",
                dev.moments,
                dev.moment_ses,
            )
            if dev.tail is not None:
                freqs = dev.tail.empirical
                ses = np.sqrt(np.maximum(freqs * (1.0 - freqs), 0.0) / runs)
                emit(f"tail_empirical_tau{dev.tau}", freqs, ses)
                emit(f"tail_markov_tau{dev.tau}", dev.tail.markov_bound)


_RUN_FILE_RE = re.compile(r"run_(\d+)\.csv$")


def completed_run_ids(output_dir) -> list:
    """Sorted ids of run records present in the directory."""
    runs_dir = Path(output_dir) / RUNS_DIR
    if not runs_dir.is_dir():
        return []
    ids = []
    for entry in runs_dir.iterdir():
        match = _RUN_FILE_RE.fullmatch(entry.name)
        if match:
            ids.append(int(match.group(1)))
    return sorted(ids)

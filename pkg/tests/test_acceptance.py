"""End-to-end acceptance gate for the estimator and the Monte Carlo harness.

Seven criteria, each printed as a single PASS/FAIL line: exact agreement
between the recursion and its batch oracle, the closed-form identities for
P_k and the error, Gaussian limits and covariance efficiency of the scaled
error, power-law decay of the error moments, linear growth of centered
partial-sum second moments with Markov-consistent tails, and exact inertness
of a generously sized projection ball.

The three Monte Carlo experiments are pinned to fixed master seeds so the
numbers below are bit-reproducible; tolerances leave room for an unlucky
reseed (at these run counts every statistic sits well inside its band).
"""

import time
from pathlib import Path

import numpy as np
import pytest

from arxrls.config import default_config, load_config
from arxrls.estimator import (
    RlsConfig,
    batch_oracle,
    error_decomposition,
    run_rls,
    woodbury_residual,
)
from arxrls.harness import run_experiment
from arxrls.model import ArxSystem, SignalGeneratorSpec, generate_input, simulate
from conftest import random_stable_system

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

#: Systems drawn for the oracle sweeps and the checkpoints along each run.
N_SYSTEMS = 50
ORACLE_KS = (1, 3, 10, 100, 1000)
ORACLE_TOL = 1e-8

DYADIC_GRID = tuple(2**i for i in range(7, 14))


def _verdict(num, ok, detail):
    print(f"[criterion {num}] {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def _oracle_sweep():
    """Yield (system, trajectory, config) for the randomized oracle sweeps."""
    rng = np.random.default_rng(8101)
    for i in range(N_SYSTEMS):
        system = random_stable_system(rng, max_order=3)
        u = generate_input(SignalGeneratorSpec(), max(ORACLE_KS), seed=9000 + i)
        traj = simulate(system, u, seed=9500 + i)
        yield system, traj, RlsConfig()


@pytest.fixture(scope="module")
def experiment_a(tmp_path_factory):
    """R = 2000 runs at horizon 5000: normality and covariance criteria."""
    out = tmp_path_factory.mktemp("acceptance_a")
    config = load_config(CONFIG_DIR / "acceptance.json").with_output_dir(
        out / "exp"
    )
    t0 = time.perf_counter()
    summary = run_experiment(config)
    return summary, time.perf_counter() - t0


@pytest.fixture(scope="module")
def experiment_b(tmp_path_factory):
    """R = 1000 runs over a dyadic grid: error-moment decay rates."""
    out = tmp_path_factory.mktemp("acceptance_b")
    config = default_config(
        runs=1000,
        k_grid=DYADIC_GRID,
        master_seed=731002,
        output_dir=out / "exp",
    )
    t0 = time.perf_counter()
    summary = run_experiment(config)
    return summary, time.perf_counter() - t0


@pytest.fixture(scope="module")
def experiment_c(tmp_path_factory):
    """R = 2000 runs over a dyadic grid: partial-sum growth and tails."""
    out = tmp_path_factory.mktemp("acceptance_c")
    config = default_config(
        runs=2000,
        k_grid=DYADIC_GRID,
        gamma=1,
        taus=(0, 1),
        tail_epsilon=0.1,
        master_seed=731003,
        output_dir=out / "exp",
    )
    t0 = time.perf_counter()
    summary = run_experiment(config)
    return summary, time.perf_counter() - t0


def test_recursive_matches_batch_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for system, traj, config in _oracle_sweep():
        for k in ORACLE_KS:
            state = run_rls(traj, system.m, system.n, config, [k]).final
            reference = batch_oracle(traj, k, system.m, system.n, config)
            worst = max(worst, float(np.max(np.abs(state.theta_hat - reference))))
    elapsed = time.perf_counter() - t0
    ok = worst <= ORACLE_TOL and elapsed < 10.0
    assert _verdict(
        1,
        ok,
        f"max recursive-vs-batch gap {worst:.2e} <= {ORACLE_TOL:.0e} over "
        f"{N_SYSTEMS} systems, k up to {max(ORACLE_KS)} ({elapsed:.1f} s)",
    )
    assert worst <= ORACLE_TOL
    assert elapsed < 10.0


def test_closed_form_identities_along_runs():
    t0 = time.perf_counter()
    worst_wood = 0.0
    worst_decomp = 0.0
    for system, traj, config in _oracle_sweep():
        for k in ORACLE_KS:
            state = run_rls(traj, system.m, system.n, config, [k]).final
            worst_wood = max(
                worst_wood,
                woodbury_residual(state, traj, system.m, system.n, config),
            )
            worst_decomp = max(
                worst_decomp,
                error_decomposition(state, traj, system, config).residual,
            )
    elapsed = time.perf_counter() - t0
    worst = max(worst_wood, worst_decomp)
    ok = worst <= ORACLE_TOL and elapsed < 10.0
    assert _verdict(
        2,
        ok,
        f"max relative residual {worst:.2e} <= {ORACLE_TOL:.0e} "
        f"(inverse-P {worst_wood:.2e}, error representation {worst_decomp:.2e}; "
        f"{elapsed:.1f} s)",
    )
    assert worst <= ORACLE_TOL
    assert elapsed < 10.0


def test_scaled_errors_pass_normality(experiment_a):
    summary, elapsed = experiment_a
    results = dict(summary.normality)
    crit = next(iter(results.values())).critical_value
    worst = max(r.ks_statistic for r in results.values())
    ok = all(r.passed for r in results.values()) and elapsed < 300.0
    assert _verdict(
        3,
        ok,
        f"KS on {len(results)} directions, worst {worst:.4f} < {crit:.4f} "
        f"at k={summary.k_ref}, R={summary.config.runs} ({elapsed:.1f} s)",
    )
    for label, res in results.items():
        assert res.passed, f"direction {label}: ks={res.ks_statistic}"
    assert elapsed < 300.0


def test_covariance_reaches_lower_bound(experiment_a):
    summary, _ = experiment_a
    gap_emp = summary.gap_empirical_vs_crlb
    gap_model = summary.gap_crlb_vs_model
    ok = gap_emp <= 0.15 and gap_model <= 0.05
    assert _verdict(
        4,
        ok,
        f"scaled covariance within {gap_emp:.3f} of the bound (<= 0.15); "
        f"bound within {gap_model:.4f} of its stationary limit (<= 0.05)",
    )
    assert gap_emp <= 0.15
    assert gap_model <= 0.05


def test_error_moments_decay_at_predicted_rates(experiment_b):
    summary, elapsed = experiment_b
    fit2 = summary.moment_fits[2.0]
    fit1 = summary.moment_fits[1.0]
    ok = (
        -1.2 <= fit2.slope <= -0.8
        and fit2.r_squared >= 0.98
        and -0.7 <= fit1.slope <= -0.3
        and elapsed < 600.0
    )
    assert _verdict(
        5,
        ok,
        f"squared-error slope {fit2.slope:.3f} in [-1.2, -0.8] "
        f"(r^2={fit2.r_squared:.4f}), first-moment slope {fit1.slope:.3f} "
        f"in [-0.7, -0.3] ({elapsed:.1f} s)",
    )
    assert -1.2 <= fit2.slope <= -0.8
    assert fit2.r_squared >= 0.98
    assert -0.7 <= fit1.slope <= -0.3
    assert elapsed < 600.0


def test_partial_sum_moments_grow_linearly(experiment_c):
    summary, elapsed = experiment_c
    devs = {d.tau: d for d in summary.deviations}
    assert set(devs) == {0, 1}
    slopes = {tau: d.rate.slope for tau, d in devs.items()}
    tails_ok = all(
        np.all(np.asarray(d.tail.empirical) <= np.asarray(d.tail.markov_bound))
        for d in devs.values()
    )
    ok = (
        all(0.8 <= s <= 1.2 for s in slopes.values())
        and tails_ok
        and elapsed < 600.0
    )
    assert _verdict(
        6,
        ok,
        f"second-moment growth slopes {slopes[0]:.3f}, {slopes[1]:.3f} in "
        f"[0.8, 1.2]; tails under their moment envelopes: {tails_ok} "
        f"({elapsed:.1f} s)",
    )
    for tau, slope in slopes.items():
        assert 0.8 <= slope <= 1.2, f"tau={tau}"
    assert tails_ok
    assert elapsed < 600.0


def test_generous_projection_is_inert():
    system = ArxSystem([-0.5], [1.0], 0.5)
    horizon = 2000
    u = generate_input(SignalGeneratorSpec(), horizon, seed=4242)
    traj = simulate(system, u, seed=4243)
    every_k = list(range(1, horizon + 1))
    radius = 10.0 * float(np.linalg.norm(system.theta))
    plain = run_rls(traj, 1, 1, RlsConfig(), every_k)
    balled = run_rls(traj, 1, 1, RlsConfig(projection_radius=radius), every_k)
    same = (
        np.array_equal(plain.theta_hats, balled.theta_hats)
        and np.array_equal(plain.trace_p, balled.trace_p)
        and np.array_equal(plain.final.theta_hat, balled.final.theta_hat)
        and np.array_equal(plain.final.p, balled.final.p)
    )
    assert _verdict(
        7,
        same,
        f"radius {radius:.3f} ball leaves all {horizon} steps bitwise "
        f"unchanged: {same}",
    )
    assert same

"""Efficiency statistics tests: power-law fits against exact curves, the
CRLB against closed-form limits, KS normality on controlled samples, and
the Markov-envelope property of the tail report."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from arxrls.efficiency import (
    McErrorPanel,
    covariance_gap,
    crlb,
    crlb_from_gram,
    deviation_matrix,
    deviation_moment_rate,
    empirical_covariance,
    error_moment_curve,
    fit_power_law,
    moment_rate,
    normality_directions,
    normality_test,
    tail_probability,
)
from arxrls.model import (
    ArxSystem,
    DeterministicSignal,
    SignalGeneratorSpec,
    generate_input,
    simulate,
)
from arxrls.seeding import run_generator
from arxrls.stationary import DegenerateExcitationError


class TestFitPowerLaw:
    def test_exact_power_law(self):
        k = np.array([10, 20, 40, 80, 160])
        fit = fit_power_law(k, 3.0 * k.astype(float) ** -1.5)
        assert fit.slope == pytest.approx(-1.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_series(self):
        k = np.array([1, 2, 4, 8, 16])
        fit = fit_power_law(k, np.full(5, 7.0))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_power_law([1, 2, 4, 8], np.ones(4))  # too few points
        with pytest.raises(ValueError):
            fit_power_law([1, 2, 4, 8, 16], np.array([1, 1, 0, 1, 1.0]))
        with pytest.raises(ValueError):
            fit_power_law([1, 2, 2, 8, 16], np.ones(5))  # non-increasing grid


class TestMomentCurves:
    def test_hand_computed_panel(self):
        k_grid = np.array([1, 2, 3, 4, 5])
        errors = np.zeros((2, 5, 1))
        errors[0, :, 0] = [4.0, 2.0, 1.0, 0.5, 0.25]
        errors[1, :, 0] = [2.0, 4.0, 3.0, 1.5, 0.75]
        panel = McErrorPanel(k_grid, errors)
        means, ses = error_moment_curve(panel, 1.0)
        assert_allclose(means, [3.0, 3.0, 2.0, 1.0, 0.5], atol=1e-15)
        # se = std(ddof=1)/sqrt(2) of each column
        assert ses[0] == pytest.approx(np.std([4.0, 2.0], ddof=1) / math.sqrt(2))
        means2, _ = error_moment_curve(panel, 2.0)
        assert means2[0] == pytest.approx((16.0 + 4.0) / 2.0)

    def test_moment_rate_recovers_exponent(self):
        # errors shrinking exactly like k^{-1/2} in every run
        k_grid = np.array([4, 8, 16, 32, 64, 128])
        rng = np.random.default_rng(0)
        scale = k_grid.astype(float) ** -0.5
        errors = rng.uniform(0.9, 1.1, (50, 6, 2)) * scale[None, :, None]
        panel = McErrorPanel(k_grid, errors)
        fit = moment_rate(panel, 2.0)
        assert fit.slope == pytest.approx(-1.0, abs=0.05)

    def test_single_run_has_no_se(self):
        panel = McErrorPanel(
            np.array([1, 2, 3, 4, 5]), np.ones((1, 5, 1))
        )
        _, ses = error_moment_curve(panel, 1.0)
        assert np.all(np.isnan(ses))


class TestCrlb:
    @staticmethod
    def _white_noise_runs(count, horizon, seed0, var_u=1.0, var_d=0.25):
        system = ArxSystem([-0.6], [1.5], math.sqrt(var_d))
        spec = SignalGeneratorSpec(
            deterministic=DeterministicSignal(kind="zero"),
            e_std=math.sqrt(var_u),
        )
        runs = []
        for r in range(count):
            rng = run_generator(seed0, r)
            runs.append(simulate(system, generate_input(spec, horizon, rng), rng))
        return system, runs

    def test_against_closed_form_limit(self):
        # For the white-noise system the stationary regressor moment matrix
        # is M = [[Ryy0, -Ryu0], [-Ryu0, Ruu0]] with Ryu0 = 0, so
        # k * sigma_CR -> var_d * inv(M) as k grows.
        alpha, b1, var_u, var_d = 0.6, 1.5, 1.0, 0.25
        system, runs = self._white_noise_runs(200, 512, seed0=314)
        estimate = crlb(runs, 512, var_d, 1, 1)
        ryy0 = (b1**2 * var_u + var_d) / (1.0 - alpha**2)
        m_bar = np.array([[ryy0, 0.0], [0.0, var_u]])
        expected = var_d * np.linalg.inv(m_bar)
        assert_allclose(estimate.k_scaled, expected, rtol=0.08, atol=2e-3)
        assert estimate.runs_used == 200

    def test_permutation_invariance(self):
        _, runs = self._white_noise_runs(60, 128, seed0=2718)
        base = crlb(runs, 128, 0.25, 1, 1).sigma_cr
        shuffled = list(runs)
        np.random.default_rng(1).shuffle(shuffled)
        permuted = crlb(shuffled, 128, 0.25, 1, 1).sigma_cr
        assert np.max(np.abs(base - permuted)) <= 1e-12 * np.max(np.abs(base))

    def test_degenerate_gram(self):
        system = ArxSystem([], [1.0], 0.5)
        runs = [
            simulate(system, np.zeros(65), run_generator(1, r)) for r in range(30)
        ]
        with pytest.raises(DegenerateExcitationError):
            crlb(runs, 64, 0.25, 0, 1)

    def test_min_runs(self):
        _, runs = self._white_noise_runs(10, 64, seed0=9)
        with pytest.raises(ValueError):
            crlb(runs, 64, 0.25, 1, 1)

    def test_crlb_from_gram_scaling(self):
        gram = np.array([[4.0, 0.0], [0.0, 2.0]])
        estimate = crlb_from_gram(gram, 0.5, k=10, runs_used=50)
        assert_allclose(estimate.sigma_cr, [[0.125, 0.0], [0.0, 0.25]], atol=1e-15)
        assert_allclose(estimate.k_scaled, [[1.25, 0.0], [0.0, 2.5]], atol=1e-15)


class TestEmpiricalCovariance:
    def test_hand_computed(self):
        scaled = np.zeros((100, 2))
        scaled[:50] = [1.0, 2.0]
        scaled[50:] = [-1.0, 0.0]
        cov = empirical_covariance(scaled)
        expected = 0.5 * np.outer([1, 2], [1, 2]) + 0.5 * np.outer([-1, 0], [-1, 0])
        assert_allclose(cov, expected, atol=1e-15)

    def test_min_runs(self):
        with pytest.raises(ValueError):
            empirical_covariance(np.ones((99, 2)))

    def test_gap(self):
        ref = np.eye(2)
        assert covariance_gap(np.eye(2), ref) == 0.0
        assert covariance_gap(2.0 * np.eye(2), ref) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            covariance_gap(np.eye(2), np.zeros((2, 2)))


class TestNormality:
    def test_gaussian_passes(self):
        rng = np.random.default_rng(42)
        cov = np.array([[2.0, 0.3], [0.3, 0.5]])
        chol = np.linalg.cholesky(cov)
        samples = rng.standard_normal((2000, 2)) @ chol.T
        for direction in normality_directions(cov):
            result = normality_test(samples, direction, cov)
            assert result.passed, (direction, result.ks_statistic)
            assert result.critical_value == pytest.approx(1.63 / math.sqrt(2000))

    def test_shifted_sample_fails(self):
        rng = np.random.default_rng(43)
        samples = rng.standard_normal((2000, 1)) + 0.5
        result = normality_test(samples, np.array([1.0]), np.eye(1))
        assert not result.passed
        assert result.ks_statistic > 0.1

    def test_wrong_scale_fails(self):
        # Claiming unit model variance for 2x-spread samples must fail.
        rng = np.random.default_rng(44)
        samples = 2.0 * rng.standard_normal((2000, 1))
        result = normality_test(samples, np.array([1.0]), np.eye(1))
        assert not result.passed

    def test_direction_must_be_unit(self):
        samples = np.random.default_rng(0).standard_normal((600, 2))
        with pytest.raises(ValueError):
            normality_test(samples, np.array([1.0, 1.0]), np.eye(2))

    def test_min_runs(self):
        samples = np.random.default_rng(0).standard_normal((499, 1))
        with pytest.raises(ValueError):
            normality_test(samples, np.array([1.0]), np.eye(1))

    def test_directions_shape_and_dominance(self):
        cov = np.diag([1.0, 4.0, 0.25])
        directions = normality_directions(cov)
        assert directions.shape == (4, 3)
        assert_allclose(np.linalg.norm(directions, axis=1), 1.0, atol=1e-12)
        assert_allclose(directions[-1], [0.0, 1.0, 0.0], atol=1e-12)


class TestDeviations:
    def test_deviation_matrix_centers_columns(self):
        sums = np.array([[1.0, 10.0], [3.0, 30.0], [5.0, 20.0]])
        dev = deviation_matrix(sums)
        assert_allclose(np.mean(dev, axis=0), 0.0, atol=1e-15)
        assert_allclose(dev[:, 0], [-2.0, 0.0, 2.0], atol=1e-15)

    def test_rate_recovers_linear_variance_growth(self):
        # S_k ~ N(mu_k, k): deviations have E[Y_k^2] ~ k exactly.
        rng = np.random.default_rng(11)
        k_grid = np.array([16, 32, 64, 128, 256])
        sums = 5.0 * k_grid + rng.standard_normal((800, 5)) * np.sqrt(k_grid)
        fit = deviation_moment_rate(k_grid, sums, gamma=1)
        assert fit.slope == pytest.approx(1.0, abs=0.15)

    def test_gamma_two_needs_more_runs(self):
        k_grid = np.array([16, 32, 64, 128, 256])
        sums = np.random.default_rng(0).standard_normal((600, 5))
        with pytest.raises(ValueError):
            deviation_moment_rate(k_grid, sums, gamma=2)

    def test_markov_envelope_always_holds(self):
        # The envelope is Markov's inequality on the empirical measure, so
        # it must hold for arbitrary data — here deliberately heavy-tailed.
        rng = np.random.default_rng(12)
        k_grid = np.array([8, 16, 32, 64, 128])
        sums = rng.standard_cauchy((1500, 5)) * np.sqrt(k_grid)
        report = tail_probability(k_grid, sums, epsilon=0.25, gamma=1)
        assert np.all(report.empirical <= report.markov_bound + 1e-12)

    def test_tail_counts_by_hand(self):
        k_grid = np.array([10, 20, 40, 80, 160])
        rng = np.random.default_rng(13)
        sums = rng.standard_normal((1200, 5))
        report = tail_probability(k_grid, sums, epsilon=0.001, gamma=1)
        dev = deviation_matrix(sums)
        for s, k in enumerate(k_grid):
            frac = np.mean(np.abs(dev[:, s]) > k * 0.001)
            assert report.empirical[s] == pytest.approx(frac, abs=1e-15)

    def test_tail_min_runs(self):
        with pytest.raises(ValueError):
            tail_probability(
                np.array([1, 2, 3, 4, 5]), np.ones((999, 5)), epsilon=0.1
            )

"""Shared fixtures: the stock first-order system and small experiment
configs sized for fast tests."""

import dataclasses

import numpy as np
import pytest

from arxrls.config import ExperimentConfig
from arxrls.model import ArxSystem, SignalGeneratorSpec


@pytest.fixture
def default_system():
    return ArxSystem([-0.5], [1.0], 0.5)


@pytest.fixture
def default_spec():
    return SignalGeneratorSpec()


@pytest.fixture
def small_config(tmp_path):
    """A cheap experiment: 40 runs on a short dyadic grid."""
    return ExperimentConfig(
        system=ArxSystem([-0.5], [1.0], 0.5),
        input=SignalGeneratorSpec(),
        runs=40,
        k_grid=(16, 32, 64, 128, 256),
        gamma=1,
        master_seed=42,
        output_dir=tmp_path / "exp",
        stationary_horizon=4096,
    )


def make_config(tmp_path, **overrides):
    base = ExperimentConfig(
        system=ArxSystem([-0.5], [1.0], 0.5),
        input=SignalGeneratorSpec(),
        runs=40,
        k_grid=(16, 32, 64, 128, 256),
        gamma=1,
        master_seed=42,
        output_dir=tmp_path / "exp",
        stationary_horizon=4096,
    )
    return dataclasses.replace(base, **overrides) if overrides else base


def random_stable_system(rng, max_order=3):
    """Draw a random ARX system whose A(z) zeros sit outside the unit disc.

    Zeros are constructed as 1/p for poles p with |p| <= 0.9, so the
    stability margin is comfortable.  Complex poles come in conjugate
    pairs, keeping the coefficients real.
    """
    m = int(rng.integers(1, max_order + 1))
    n = int(rng.integers(1, max_order + 1))
    poly = np.array([1.0])
    remaining = m
    while remaining > 0:
        if remaining >= 2 and rng.random() < 0.5:
            radius = 0.9 * np.sqrt(rng.random())
            angle = rng.uniform(0.0, np.pi)
            re, im = radius * np.cos(angle), radius * np.sin(angle)
            # (1 - p z)(1 - conj(p) z) = 1 - 2 Re(p) z + |p|^2 z^2
            factor = np.array([1.0, -2.0 * re, radius**2])
            remaining -= 2
        else:
            p = rng.uniform(-0.9, 0.9)
            factor = np.array([1.0, -p])
            remaining -= 1
        poly = np.convolve(poly, factor)
    a = poly[1:]
    signs = rng.choice([-1.0, 1.0], size=n)
    b = signs * rng.uniform(0.5, 2.0, size=n)
    noise_std = float(rng.uniform(0.2, 1.0))
    return ArxSystem(a, b, noise_std)

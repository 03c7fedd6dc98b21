"""Experiment configuration: a JSON format with a published schema, plus
the validated in-memory form the harness consumes.

The JSON layout is flat where possible (system coefficients at top level)
with nested ``input`` and ``estimator`` sections; see ``config_schema.json``
next to this module for the authoritative schema.  ``dump_config`` writes
canonical JSON (sorted keys, two-space indent), so equal configurations
produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .estimator import RlsConfig
from .model import ArxSystem, DeterministicSignal, SignalGeneratorSpec

SCHEMA_VERSION = 1

_DEFAULT_K_GRID = (128, 256, 512, 1024, 2048, 4096, 8192)


class ConfigError(ValueError):
    """The configuration file or dictionary is invalid."""


def load_schema() -> dict:
    """The JSON schema shipped with the package."""
    text = resources.files("arxrls").joinpath("config_schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a Monte Carlo experiment needs, validated on construction.

    ``k_ref`` (the step at which covariance/normality statistics are taken)
    defaults to the last grid point.  ``taus`` are the lags whose
    output-product partial sums get deviation statistics; ``tail_epsilon``
    scales the tail threshold |Y_k| > k * eps.  ``stationary_horizon`` is
    the length of the single long record used for the stationary covariance
    table.
    """

    system: ArxSystem
    input: SignalGeneratorSpec
    estimator: RlsConfig = field(default_factory=RlsConfig)
    runs: int = 200
    k_grid: tuple[int, ...] = _DEFAULT_K_GRID
    gamma: int = 1
    master_seed: int = 20260825
    output_dir: Path = Path("out/default")
    taus: tuple[int, ...] = (0, 1)
    tail_epsilon: float = 0.1
    stationary_horizon: int = 131072
    k_ref: int | None = None

    def __post_init__(self):
        if int(self.runs) < 1:
            raise ConfigError("runs must be >= 1")
        object.__setattr__(self, "runs", int(self.runs))
        grid = tuple(int(k) for k in self.k_grid)
        if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("k_grid must be strictly increasing and >= 1")
        object.__setattr__(self, "k_grid", grid)
        if int(self.gamma) not in (1, 2):
            raise ConfigError("gamma must be 1 or 2")
        object.__setattr__(self, "gamma", int(self.gamma))
        seed = int(self.master_seed)
        if not 0 <= seed < 2**64:
            raise ConfigError("master_seed must fit in uint64")
        object.__setattr__(self, "master_seed", seed)
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        taus = tuple(int(t) for t in self.taus)
        if not taus or any(t < 0 for t in taus) or len(set(taus)) != len(taus):
            raise ConfigError("taus must be distinct lags >= 0")
        object.__setattr__(self, "taus", taus)
        eps = float(self.tail_epsilon)
        if not eps > 0.0:
            raise ConfigError("tail_epsilon must be > 0")
        object.__setattr__(self, "tail_epsilon", eps)
        horizon = int(self.stationary_horizon)
        if horizon < 256:
            raise ConfigError("stationary_horizon must be >= 256")
        object.__setattr__(self, "stationary_horizon", horizon)
        if self.k_ref is not None:
            k_ref = int(self.k_ref)
            if k_ref not in grid:
                raise ConfigError("k_ref must be one of the k_grid points")
            object.__setattr__(self, "k_ref", k_ref)
        if self.system.noise_std <= 0.0:
            raise ConfigError("experiments need noise_std > 0")
        if self.estimator.theta0 is not None and (
            self.estimator.theta0.size != self.system.dim
        ):
            raise ConfigError("estimator theta0 length must equal m + n")

    @property
    def resolved_k_ref(self) -> int:
        return self.k_ref if self.k_ref is not None else self.k_grid[-1]

    @property
    def tau_window(self) -> int:
        """Lag window the stationary table must cover: enough for the
        excitation matrix and for every requested deviation lag (at least
        +-8 for the record)."""
        sys_need = max(self.system.m, self.system.n) - 1
        return max(sys_need, max(self.taus), 8)

    def with_output_dir(self, output_dir) -> "ExperimentConfig":
        return replace(self, output_dir=Path(output_dir))

    def with_runs(self, runs) -> "ExperimentConfig":
        return replace(self, runs=int(runs))

    def with_master_seed(self, master_seed) -> "ExperimentConfig":
        return replace(self, master_seed=int(master_seed))


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a raw dictionary against the schema and build the config."""
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None
    try:
        system = ArxSystem(
            np.asarray(raw["a_coeffs"], dtype=float),
            np.asarray(raw["b_coeffs"], dtype=float),
            float(raw["noise_std"]),
        )
        inp = raw["input"]
        deterministic = DeterministicSignal(
            kind=inp["kind"],
            amplitude=float(inp.get("amplitude", 1.0)),
            omega=float(inp.get("omega", 1.7)),
            level=float(inp.get("level", 0.0)),
        )
        spec = SignalGeneratorSpec(
            deterministic=deterministic,
            input_filter=inp.get("filter", (1.0,)),
            noise_feedthrough=inp.get("feedthrough", (1.0,)),
            e_std=float(inp.get("e_std", 1.0)),
            e_distribution=inp.get("e_distribution", "gaussian"),
            truncation_length=int(raw.get("truncation_length", 64)),
        )
        est = raw.get("estimator", {})
        estimator = RlsConfig(
            theta0=est.get("theta0"),
            p0_scale=float(est.get("p0_scale", 100.0)),
            projection_radius=est.get("projection_radius"),
        )
        return ExperimentConfig(
            system=system,
            input=spec,
            estimator=estimator,
            runs=raw["runs"],
            k_grid=raw["k_grid"],
            gamma=raw["gamma"],
            master_seed=raw["master_seed"],
            output_dir=raw["output_dir"],
            taus=raw.get("taus", (0, 1)),
            tail_epsilon=raw.get("tail_epsilon", 0.1),
            stationary_horizon=raw.get("stationary_horizon", 131072),
            k_ref=raw.get("k_ref"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def config_to_dict(config: ExperimentConfig) -> dict:
    """Plain-JSON form of a config; round-trips through config_from_dict."""
    inp = config.input
    det = inp.deterministic
    est = config.estimator
    return {
        "schema_version": SCHEMA_VERSION,
        "a_coeffs": [float(v) for v in config.system.a_coeffs],
        "b_coeffs": [float(v) for v in config.system.b_coeffs],
        "noise_std": config.system.noise_std,
        "truncation_length": inp.truncation_length,
        "input": {
            "kind": det.kind,
            "amplitude": det.amplitude,
            "omega": det.omega,
            "level": det.level,
            "filter": [float(v) for v in inp.input_filter],
            "feedthrough": [float(v) for v in inp.noise_feedthrough],
            "e_std": inp.e_std,
            "e_distribution": inp.e_distribution,
        },
        "estimator": {
            "p0_scale": est.p0_scale,
            "theta0": None if est.theta0 is None else [float(v) for v in est.theta0],
            "projection_radius": est.projection_radius,
        },
        "runs": config.runs,
        "k_grid": list(config.k_grid),
        "gamma": config.gamma,
        "master_seed": config.master_seed,
        "output_dir": config.output_dir.as_posix(),
        "taus": list(config.taus),
        "tail_epsilon": config.tail_epsilon,
        "stationary_horizon": config.stationary_horizon,
        "k_ref": config.k_ref,
    }


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a JSON object")
    return config_from_dict(raw)


def dump_config(config: ExperimentConfig, path) -> None:
    """Write canonical JSON (sorted keys, stable float repr, newline-
    terminated); equal configs yield byte-identical files."""
    path = Path(path)
    path.write_text(
        json.dumps(config_to_dict(config), sort_keys=True, indent=2) + "\n"
    )


def default_config(**overrides) -> ExperimentConfig:
    """The stock experiment: first-order system a_1 = -0.5, b_1 = 1.0 with
    noise_std 0.5, sinusoid-plus-noise input, dyadic grid 2^7..2^13."""
    base = ExperimentConfig(
        system=ArxSystem([-0.5], [1.0], 0.5),
        input=SignalGeneratorSpec(),
    )
    return replace(base, **overrides) if overrides else base

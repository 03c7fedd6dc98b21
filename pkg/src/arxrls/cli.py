"""Command-line interface.

Subcommands: ``simulate`` (one trajectory to CSV), ``estimate`` (RLS over a
trajectory file), ``montecarlo`` (run or resume an experiment), ``analyze``
(recompute the summary from a results directory), and ``check`` (fast
numerical self-test of the recursion identities).

Exit codes: 0 on success, 1 on validation failure (bad flags, bad config,
missing inputs, unstable system, degenerate excitation), 2 on runtime or
numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ._kernels import BACKEND
from .config import ConfigError, default_config, load_config
from .estimator import (
    RlsConfig,
    batch_oracle,
    error_decomposition,
    run_rls,
    woodbury_residual,
    write_trace_csv,
)
from .harness import SUMMARY_NAME, analyze, run_experiment
from .model import Trajectory, UnstableSystemError, generate_input, simulate
from .seeding import as_generator
from .stationary import DegenerateExcitationError

#: Residual budget for the ``check`` subcommand.
CHECK_TOL = 1e-8


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits with code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arxrls", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_sim = sub.add_parser("simulate", help="simulate one trajectory to CSV")
    p_sim.add_argument("--config", required=True, help="experiment config JSON")
    p_sim.add_argument("--seed", type=int, default=None, help="RNG seed (default: master_seed)")
    p_sim.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    p_sim.add_argument("--horizon", type=int, default=None, help="record length K (default: max k_grid)")

    p_est = sub.add_parser("estimate", help="run RLS over a trajectory CSV")
    p_est.add_argument("--config", required=True)
    p_est.add_argument("--trajectory", default=None, help="trajectory CSV (default: <out>/trajectory.csv)")
    p_est.add_argument("--out", default=None)

    p_mc = sub.add_parser("montecarlo", help="run or resume a Monte Carlo experiment")
    p_mc.add_argument("--config", required=True)
    p_mc.add_argument("--seed", type=int, default=None, help="override master_seed")
    p_mc.add_argument("--runs", type=int, default=None, help="override run count")
    p_mc.add_argument("--out", default=None, help="override output directory")
    p_mc.add_argument("--workers", type=int, default=None, help="worker processes (default: ARXRLS_THREADS or CPU count)")

    p_an = sub.add_parser("analyze", help="recompute the summary of a results directory")
    p_an.add_argument("--out", default=None, help="results directory (default: config output_dir)")
    p_an.add_argument("--config", default=None, help="config whose output_dir to analyze")

    p_chk = sub.add_parser("check", help="numerical self-test of the recursion identities")
    p_chk.add_argument("--config", default=None, help="config to take the system from (default: built-in)")
    p_chk.add_argument("--seed", type=int, default=0)

    return parser


def _resolve_out(args, config) -> Path:
    out = Path(args.out) if args.out else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    out = _resolve_out(args, config)
    seed = args.seed if args.seed is not None else config.master_seed
    horizon = args.horizon if args.horizon is not None else config.k_grid[-1]
    rng = as_generator(int(seed))
    u = generate_input(config.input, horizon, rng)
    trajectory = simulate(config.system, u, rng)
    path = out / "trajectory.csv"
    trajectory.to_csv(path)
    print(f"wrote {path} (K={trajectory.horizon})")
    return 0


def cmd_estimate(args) -> int:
    config = load_config(args.config)
    out = _resolve_out(args, config)
    traj_path = Path(args.trajectory) if args.trajectory else out / "trajectory.csv"
    if not traj_path.exists():
        raise ConfigError(f"trajectory file not found: {traj_path}")
    trajectory = Trajectory.from_csv(traj_path)
    system = config.system
    trace = run_rls(
        trajectory,
        system.m,
        system.n,
        config.estimator,
        snapshot_ks=np.arange(1, trajectory.horizon + 1),
    )
    path = out / "estimate_trace.csv"
    write_trace_csv(path, trace, theta_true=system.theta)
    final = trace.final.theta_hat
    err = float(np.linalg.norm(final - system.theta))
    print(f"wrote {path}")
    print(f"theta_hat({trajectory.horizon}) = {final.tolist()}  err_norm = {err:.6g}")
    return 0


def cmd_montecarlo(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_master_seed(args.seed)
    if args.runs is not None:
        config = config.with_runs(args.runs)
    if args.out is not None:
        config = config.with_output_dir(args.out)
    summary = run_experiment(config, workers=args.workers)
    out = Path(config.output_dir)
    print(f"completed {config.runs} runs in {out}")
    print(f"excitation min eigenvalue: {summary.excitation.min_eigenvalue:.6g}")
    for p, fit in sorted(summary.moment_fits.items()):
        if fit is not None:
            print(
                f"E||err||^{int(p)} ~ k^{fit.slope:+.3f}  (r^2 = {fit.r_squared:.4f})"
            )
    print(f"wrote {out / SUMMARY_NAME}")
    return 0


def cmd_analyze(args) -> int:
    if args.out:
        out = Path(args.out)
    elif args.config:
        out = Path(load_config(args.config).output_dir)
    else:
        raise ConfigError("analyze needs --out or --config")
    if not out.is_dir():
        raise ConfigError(f"results directory not found: {out}")
    analyze(out)
    print(f"wrote {out / SUMMARY_NAME}")
    return 0


def cmd_check(args) -> int:
    config = load_config(args.config) if args.config else default_config()
    system = config.system
    est_config = config.estimator
    # Drop any configured projection: the identities below are for the
    # projection-free recursion.
    est_config = RlsConfig(
        theta0=est_config.theta0, p0=est_config.p0, p0_scale=est_config.p0_scale
    )
    print(f"kernel backend: {BACKEND}")
    horizon = 400
    checkpoints = [1, 2, 3, 5, 10, 50, 100, 400]
    worst_oracle = 0.0
    worst_woodbury = 0.0
    worst_decomp = 0.0
    for offset in range(3):
        rng = as_generator(int(args.seed) + offset)
        u = generate_input(config.input, horizon, rng)
        trajectory = simulate(system, u, rng)
        trace = run_rls(
            trajectory, system.m, system.n, est_config, snapshot_ks=checkpoints
        )
        for s, k in enumerate(checkpoints):
            oracle = batch_oracle(trajectory, k, system.m, system.n, est_config)
            gap = float(np.max(np.abs(trace.theta_hats[s] - oracle)))
            worst_oracle = max(worst_oracle, gap)
        final = trace.final
        worst_woodbury = max(
            worst_woodbury,
            woodbury_residual(final, trajectory, system.m, system.n, est_config),
        )
        worst_decomp = max(
            worst_decomp,
            error_decomposition(final, trajectory, system, est_config).residual,
        )
    print(f"recursive vs batch max gap:    {worst_oracle:.3e}")
    print(f"woodbury identity residual:    {worst_woodbury:.3e}")
    print(f"error decomposition residual:  {worst_decomp:.3e}")
    worst = max(worst_oracle, worst_woodbury, worst_decomp)
    if worst > CHECK_TOL:
        print(f"FAIL: worst residual {worst:.3e} exceeds {CHECK_TOL:.0e}")
        return 2
    print(f"OK: all residuals within {CHECK_TOL:.0e}")
    return 0


_HANDLERS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "montecarlo": cmd_montecarlo,
    "analyze": cmd_analyze,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except (
        ConfigError,
        UnstableSystemError,
        DegenerateExcitationError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

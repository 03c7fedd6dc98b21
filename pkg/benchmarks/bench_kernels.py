"""Timing comparison of the compiled and pure-Python kernel backends.

Runs the output recursion and the RLS scan on identical inputs through both
backends and reports best-of-five wall times plus the speedup.  Invoke as

    python3 benchmarks/bench_kernels.py [--horizon K] [--reps N]
"""

import argparse
import time

import numpy as np

from arxrls._kernels import pykernels

try:
    from arxrls._kernels import cykernels
except ImportError:
    cykernels = None


def best_of(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_inputs(horizon, rng):
    # second-order system with A(z) zeros at 2.0 and 2.5
    a = np.array([-0.9, 0.2])
    b = np.array([1.0, 0.5])
    u = np.cos(1.7 * np.arange(horizon + 1)) + rng.standard_normal(horizon + 1)
    d = 0.5 * rng.standard_normal(horizon)
    return a, b, np.ascontiguousarray(u), np.ascontiguousarray(d)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=int, default=20000)
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(7)
    a, b, u, d = make_inputs(args.horizon, rng)
    y = pykernels.simulate_outputs(a, b, u, d)
    theta0 = np.zeros(4)
    p0 = 100.0 * np.eye(4)
    snaps = np.array([args.horizon], dtype=np.int64)

    cases = [
        ("simulate_outputs", lambda mod: mod.simulate_outputs(a, b, u, d)),
        (
            "rls_scan (m=2, n=2)",
            lambda mod: mod.rls_scan(y, u, 2, 2, theta0.copy(), p0.copy(), snaps, 0.0),
        ),
    ]

    print(f"horizon K = {args.horizon}, best of {args.reps} repetitions")
    if cykernels is None:
        print("compiled backend unavailable; timing the pure backend only")
    header = f"{'kernel':<22} {'pure':>12} {'compiled':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        t_pure = best_of(lambda: call(pykernels), args.reps)
        if cykernels is not None:
            t_comp = best_of(lambda: call(cykernels), args.reps)
            ratio = t_pure / t_comp
            print(
                f"{name:<22} {t_pure * 1e3:>9.2f} ms {t_comp * 1e3:>9.2f} ms "
                f"{ratio:>8.1f}x"
            )
        else:
            print(f"{name:<22} {t_pure * 1e3:>9.2f} ms {'-':>12} {'-':>9}")

    if cykernels is not None:
        got = cykernels.simulate_outputs(a, b, u, d)
        match = np.array_equal(np.asarray(got), np.asarray(y))
        print(f"backend outputs bit-identical: {match}")


if __name__ == "__main__":
    main()

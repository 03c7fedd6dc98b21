"""Counter-based RNG streams for reproducible (and parallel-safe) Monte Carlo.

Each run gets its own Philox generator keyed by ``(master_seed, run_id)``.
Streams are independent by construction and a run's draws depend only on
that key pair — never on worker count, scheduling order, or which other
runs execute — so resuming or re-sharding an experiment reproduces every
sample path exactly.
"""

import numpy as np

_UINT64_MAX = 2**64 - 1


def as_generator(seed):
    """Coerce ``seed`` (int, SeedSequence, or Generator) to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.default_rng(seed)


def run_generator(master_seed, run_id):
    """Independent stream for one Monte Carlo run.

    Both arguments must fit in an unsigned 64-bit integer.
    """
    master_seed = int(master_seed)
    run_id = int(run_id)
    if not 0 <= master_seed <= _UINT64_MAX:
        raise ValueError("master_seed must fit in uint64")
    if not 0 <= run_id <= _UINT64_MAX:
        raise ValueError("run_id must fit in uint64")
    key = np.array([master_seed, run_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))

"""Counter-based random streams keyed by (seed, purpose, index)."""

from __future__ import annotations

import os

import numpy as np

# stream purposes; part of the key so different consumers never overlap
OFFSETS = 1
CHAIN = 2
SYNTHETIC = 3
VALIDATE = 4
SAMPLE = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for ``seed`` and an integer key path."""
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def fresh_seed() -> int:
    return int(np.random.SeedSequence().entropy % 2**63)


def worker_count(requested: int | None = None) -> int:
    """Number of worker threads.

    ``GSR_FNS_THREADS``, when set, is the default and caps explicit requests;
    otherwise the default is the CPU count. Results never depend on it.
    """
    cap = os.environ.get("GSR_FNS_THREADS")
    if cap:
        cap = max(1, int(cap))
        n = cap if requested is None else min(requested, cap)
    else:
        n = requested if requested is not None else (os.cpu_count() or 1)
    return max(1, n)

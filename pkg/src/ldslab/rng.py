"""Seedable, splittable random number generation.

All randomness in the package flows through numpy ``Generator`` objects.
Reproducibility across runs and across any degree of parallelism is
obtained by deriving one independent substream per trajectory from the
pair (seed, trajectory index): substream ``i`` of seed ``s`` is the
``SeedSequence(s, spawn_key=(i,))`` stream, which is exactly the ``i``-th
child of ``SeedSequence(s).spawn(...)``.  Whoever consumes trajectory
``i`` therefore sees identical draws no matter how work is sharded.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = ["substream", "worker_threads"]


def substream(seed: int, index: int) -> np.random.Generator:
    """Return the generator for substream ``index`` of the given seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def worker_threads() -> int:
    """Worker-thread cap from the LDSLAB_THREADS environment variable.

    Defaults to 1 (serial).  Results are independent of this setting by
    construction; it only bounds concurrency.
    """
    raw = os.environ.get("LDSLAB_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)

"""Named, reproducible randomness streams.

Every stochastic operation in the package draws from a PCG64 generator
obtained here, so one master seed plus a stream name pins down all sampling
regardless of call order or parallel scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(master_seed: int, *path: str | int) -> int:
    """Derive the child seed for the named sub-stream of ``master_seed``."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:16], "big")


def stream(master_seed: int, *path: str | int) -> np.random.Generator:
    """PCG64 generator for the named sub-stream of ``master_seed``."""
    return np.random.default_rng(stream_seed(master_seed, *path))

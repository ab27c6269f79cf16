"""Reproducible random streams.

All randomness in the package flows through numpy Generators seeded from a
counter-based Philox bit generator. A stream is identified by the pair
(seed, stream): independent replicas of one experiment share the seed and
differ in the stream index, which makes replica farms reproducible and
embarrassingly parallel without coordination.
"""
from __future__ import annotations

import numpy as np

# Recorded in every report so another implementation can reproduce runs.
ALGORITHM = "philox4x64"


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for the (seed, stream) pair; same pair, same draws."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must fit in 64 bits")
    if not 0 <= int(stream) < 2**64:
        raise ValueError("stream must fit in 64 bits")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))

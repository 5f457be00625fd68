"""Deterministic seed derivation.

Every random draw in a run descends from one master seed. Child streams
are keyed by small integer tags plus identifiers such as node id and
round index, so two runs with the same config produce bit-identical
randomness regardless of execution order elsewhere.
"""
from __future__ import annotations

import numpy as np

# Stream tags. Values are arbitrary but frozen: changing them changes
# every derived stream.
DATA = 1
PARTITION = 2
INIT = 3
SELECT = 4
BATCH = 5
PAIRS = 6
SWEEP = 7


def spawn_rng(*parts: int) -> np.random.Generator:
    """Generator for the stream keyed by the given integer path."""
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in parts]))


def spawn_seed(*parts: int) -> int:
    """Single integer seed derived from the given path (for APIs that take an int)."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint32)[0])

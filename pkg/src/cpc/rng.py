"""Seeded random streams.

All randomness flows from one root seed; each consumer asks for a named
sub-stream so adding a new consumer never perturbs existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for (root seed, stream name)."""
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))

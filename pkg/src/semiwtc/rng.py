"""Seeded RNG substreams.

All randomness in the library flows from one master seed through named
substreams, so each stage (splitting, init, shuffling, ...) is reproducible
independently of the others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the named substream of a master seed."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([master_seed, tag]))

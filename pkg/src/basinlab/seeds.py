"""Deterministic seed derivation.

Every random draw in the package flows from a master seed through
``rng_for(master, *tags)``.  Tags name the purpose ("plane", ("pair", i), ...)
so that independent units of work get independent, reproducible streams and
worker scheduling can never change a result.
"""

import hashlib

import numpy as np


def _material(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"seed tags must be int or str, got {type(part)!r}")


def seed_sequence(master: int, *tags) -> np.random.SeedSequence:
    """SeedSequence keyed by the master seed plus purpose tags."""
    return np.random.SeedSequence([_material(master)] + [_material(t) for t in tags])


def rng_for(master: int, *tags) -> np.random.Generator:
    """PCG64 generator keyed by (master, *tags)."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master, *tags)))

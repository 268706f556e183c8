"""Deterministic random stream derivation.

Every stochastic routine in the package draws from a generator obtained
through `rng_for`, so a single experiment seed fans out into independent,
reproducible streams per purpose (and per graph index, trial, ...).
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["rng_for"]


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    # Stable across runs and platforms, unlike hash().
    return zlib.crc32(str(tag).encode("utf8"))


def rng_for(seed: int, *tags) -> np.random.Generator:
    """Return a generator for stream (seed, *tags).

    Identical arguments always yield an identical stream; distinct tag
    tuples yield statistically independent streams.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))

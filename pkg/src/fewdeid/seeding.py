"""Deterministic seed derivation so independent RNG streams never collide."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *tags) -> int:
    """Derive a child seed from a root seed and a tag path.

    Streams derived with different tag paths are independent; the same
    (seed, tags) pair always yields the same child seed.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_from(seed: int, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *tags)))

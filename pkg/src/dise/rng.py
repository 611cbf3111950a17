"""Deterministic random streams and 64-bit hashing.

Every random draw in the package flows through a named stream derived from a
single master seed, so any component can be re-run in isolation and produce
the same values it produced inside a larger run.
"""

from __future__ import annotations

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def _purpose_key(purpose: tuple) -> int:
    text = "/".join(str(p) for p in purpose)
    return fnv1a_64(text.encode("utf-8"))


def derive_seed(seed: int, *purpose) -> int:
    """Collapse (seed, purpose path) into a single integer sub-seed."""
    return fnv1a_64(f"{seed}/".encode("utf-8") + "/".join(str(p) for p in purpose).encode("utf-8"))


def stream(seed: int, *purpose) -> np.random.Generator:
    """Counter-based generator for one named stream.

    The Philox key combines the master seed with a hash of the purpose path
    (strings or integers), so streams for distinct purposes never overlap and
    the draws of one component do not depend on how many draws another
    component made.
    """
    key = np.array([seed & _MASK64, _purpose_key(purpose)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))

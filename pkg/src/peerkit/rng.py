"""Deterministic random-stream derivation.

Every stochastic component takes an explicit ``numpy.random.Generator``.
Streams are derived from structured keys (master seed, parameter values,
trial index, purpose tag) so that reruns, parallel execution, and paired
comparisons across configurations all see exactly the same draws.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

__all__ = ["seed_sequence", "stream"]


def _key_to_int(key: object) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    if isinstance(key, (float, np.floating)):
        # Exact bit pattern, stable across platforms.
        return struct.unpack("<Q", struct.pack("<d", float(key)))[0]
    if isinstance(key, str):
        digest = hashlib.blake2s(key.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"unsupported stream key type: {type(key).__name__}")


def seed_sequence(*keys: object) -> np.random.SeedSequence:
    """Build a SeedSequence from a tuple of ints, floats, and strings."""
    return np.random.SeedSequence([_key_to_int(k) for k in keys])


def stream(*keys: object) -> np.random.Generator:
    """A fresh, independent generator keyed by ``keys``.

    Equal keys always yield generators that produce identical draws.
    """
    return np.random.Generator(np.random.PCG64(seed_sequence(*keys)))

"""Deterministic child-seed derivation.

Every stochastic component draws from a ``numpy.random.Generator`` whose
seed sequence is derived from the master seed plus a tuple of string/int
keys. Keys are hashed with SHA-256 (Python's ``hash`` is salted per process),
so the same keys give the same stream in any worker process and in any
scheduling order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key: object) -> int:
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
        return int(key) & 0xFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(master: int, *keys: object) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(master), spawn_key=tuple(_key_to_int(k) for k in keys)
    )


def child_rng(master: int, *keys: object) -> np.random.Generator:
    """Return an independent generator for ``(master, *keys)``."""
    return np.random.default_rng(seed_sequence(master, *keys))


def child_seed(master: int, *keys: object) -> int:
    """Collapse a derived seed sequence into a plain 63-bit integer seed."""
    state = seed_sequence(master, *keys).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])

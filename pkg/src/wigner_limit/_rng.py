"""Seeded random streams.

Every stream is a Philox (counter-based) generator keyed by the experiment
seed plus a path of integers/strings, e.g. ``stream(7, "wigner", replica)``.
Two streams with different paths are statistically independent, and a
replica's draws do not depend on which worker ran it or in what order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream path integers must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed, *path) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *path)``.

    A ``Generator`` passed as ``seed`` is returned unchanged (``path`` must be
    empty then), which lets callers thread an existing stream through.
    """
    if isinstance(seed, np.random.Generator):
        if path:
            raise ValueError("cannot derive a keyed stream from a Generator")
        return seed
    if isinstance(seed, np.random.SeedSequence):
        entropy = seed.entropy
        base = list(seed.spawn_key)
    else:
        entropy = 0 if seed is None else _key(seed)
        base = []
    ss = np.random.SeedSequence(entropy, spawn_key=tuple(base + [_key(p) for p in path]))
    return np.random.Generator(np.random.Philox(ss))

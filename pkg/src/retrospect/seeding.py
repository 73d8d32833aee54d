"""Deterministic random streams keyed by (seed, names...)."""

from __future__ import annotations

import zlib

import numpy as np


def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from any mix of ints and strings."""
    seq = np.random.SeedSequence([_key_int(p) for p in parts])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def rng(*parts) -> np.random.Generator:
    """Counter-based Philox generator; identical keys give identical streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([_key_int(p) for p in parts])))

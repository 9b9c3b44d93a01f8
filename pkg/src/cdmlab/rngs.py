"""Deterministic RNG stream derivation.

Every random quantity in an experiment is drawn from a stream derived from
(master_seed, *identifiers).  Identifiers are ints or short role strings such
as ("policy", "metacmab", delta_index, run_index).  Strings are hashed with
SHA-256, so the mapping is stable across machines and Python processes —
re-running with the same master seed reproduces every draw, regardless of
worker count or scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_token(part: int | str) -> int:
    """Map an identifier to a uint64 entropy word, stably across runs."""
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"rng identifiers must be int or str, got {type(part)!r}")


def derive_seed_sequence(master_seed: int, *parts: int | str) -> np.random.SeedSequence:
    return np.random.SeedSequence([stable_token(master_seed)] + [stable_token(p) for p in parts])


def derive_rng(master_seed: int, *parts: int | str) -> np.random.Generator:
    """Independent generator for the (master_seed, *parts) cell role."""
    return np.random.default_rng(derive_seed_sequence(master_seed, *parts))

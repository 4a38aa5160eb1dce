"""Deterministic, platform-independent random streams.

Every random choice in the package flows from an integer master seed
through either a counter-based Philox generator (numpy-side sampling) or
the SplitMix64 finalizer below (bit-level draws inside the classifier
kernels).  Derived keys are hashes of ``(master_seed, tag, index, ...)``,
so parallel workers produce identical results regardless of schedule.

Stream tags used across the package (first derivation index):

* 1 -- capture synthesis, per record
* 2 -- jammer waveforms
* 3 -- classifier clause streams
* 4 -- epoch sample shuffles
* 5 -- cross-validation fold assignment
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

TAG_RECORD = 1
TAG_JAMMER = 2
TAG_CLAUSE = 3
TAG_EPOCH = 4
TAG_FOLD = 5


def mix64(x: int) -> int:
    """SplitMix64 finalizer: maps a 64-bit value to a well-mixed one.

    Must stay in lockstep with the numba copy in ``_ctm_kernels``; the
    training determinism contract depends on both producing identical
    bits.
    """
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_key(master_seed: int, *indices: int) -> int:
    """Fold ``(master_seed, *indices)`` into a single 64-bit stream key."""
    key = mix64(master_seed & _MASK64)
    for idx in indices:
        key = mix64(key ^ mix64(idx & _MASK64))
    return key


def generator(master_seed: int, *indices: int) -> np.random.Generator:
    """Philox generator keyed by ``derive_key(master_seed, *indices)``.

    Philox is counter-based, so streams are reproducible bit-for-bit
    across platforms and numpy thread settings.
    """
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, *indices)))

"""Counter-based uniform variates.

Every variate is a pure function of ``(key, counter)`` so results do not
depend on traversal order or on how work is split across threads.  The
mixer is the splitmix64 finalizer.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / float(1 << 53)

# stream tags, kept apart so different consumers never share variates
SITE = 1
BOND = 2
JUMP = 3
HOLD = 4
PERFORATE = 5
SAMPLE = 6


def mix(z):
    """splitmix64 finalizer on a uint64 array (wraps silently)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_key(seed, *parts):
    """Fold ``seed`` and integer ``parts`` into a key (array-broadcasting)."""
    k = mix(np.asarray(seed, dtype=np.uint64) ^ _GOLDEN)
    for p in parts:
        with np.errstate(over="ignore"):
            k = mix(k + np.asarray(p, dtype=np.uint64) * _GOLDEN + np.uint64(1))
    return k


def uniform(key, counter):
    """Uniform variates in [0, 1) with 53 bits, one per (key, counter) pair."""
    with np.errstate(over="ignore"):
        z = np.asarray(key, dtype=np.uint64) + (np.asarray(counter, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
    return (mix(z) >> np.uint64(11)).astype(np.float64) * _INV53


def uniform_block(seed, stream, start, count):
    """``count`` consecutive variates of one stream, starting at ``start``."""
    key = derive_key(seed, stream)
    return uniform(key, np.arange(start, start + count, dtype=np.uint64))

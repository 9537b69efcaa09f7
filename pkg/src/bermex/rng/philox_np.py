"""Vectorized numpy implementation of the Philox4x32-10 counter-based generator.

Every path owns an independent stream: the 64-bit stream key is derived from
(seed, path index) with a SplitMix64 mix, and the path index is additionally
folded into the counter words so streams stay distinct even under key
collisions.  The compiled backend in ``_philox.pyx`` produces bit-identical
word blocks; which one runs is decided at import time in ``bermex.rng``.
"""

from __future__ import annotations

import numpy as np

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
GOLDEN64 = np.uint64(0x9E3779B97F4A7C15)

_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)


_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _splitmix64_int(x: int) -> int:
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_keys(seed: int, path_start: int, n_paths: int) -> np.ndarray:
    """64-bit stream key per path index, as a (n_paths,) uint64 array."""
    base = _splitmix64_int(int(seed) & _MASK64)
    idx = np.arange(path_start, path_start + n_paths, dtype=np.uint64)
    return _splitmix64(np.uint64(base) + (idx + np.uint64(1)) * GOLDEN64)


def raw_words(
    seed: int, n_paths: int, tick_start: int, n_ticks: int, path_start: int = 0
) -> np.ndarray:
    """Philox output block, shape (n_paths, n_ticks, 4) uint32.

    Tick ``t`` of path ``p`` uses counter (t_lo, t_hi, p, 0) and the path's
    stream key; blocks for disjoint tick ranges of the same path concatenate
    to the same stream.
    """
    keys = stream_keys(seed, path_start, n_paths)
    k0 = (keys & _MASK32)[:, None]
    k1 = (keys >> _SH32)[:, None]

    ticks = np.arange(tick_start, tick_start + n_ticks, dtype=np.uint64)[None, :]
    pidx = np.arange(path_start, path_start + n_paths, dtype=np.uint64)[:, None]

    x0 = np.broadcast_to(ticks & _MASK32, (n_paths, n_ticks)).copy()
    x1 = np.broadcast_to(ticks >> _SH32, (n_paths, n_ticks)).copy()
    x2 = np.broadcast_to(pidx & _MASK32, (n_paths, n_ticks)).copy()
    x3 = np.broadcast_to(pidx >> _SH32, (n_paths, n_ticks)).copy()
    k0 = np.broadcast_to(k0, (n_paths, n_ticks)).copy()
    k1 = np.broadcast_to(k1, (n_paths, n_ticks)).copy()

    for r in range(10):
        if r:
            k0 += PHILOX_W0
            k0 &= _MASK32
            k1 += PHILOX_W1
            k1 &= _MASK32
        p0 = PHILOX_M0 * x0
        p1 = PHILOX_M1 * x2
        hi0, lo0 = p0 >> _SH32, p0 & _MASK32
        hi1, lo1 = p1 >> _SH32, p1 & _MASK32
        x0 = hi1 ^ x1 ^ k0
        x1 = lo1
        x2 = hi0 ^ x3 ^ k1
        x3 = lo0

    out = np.empty((n_paths, n_ticks, 4), dtype=np.uint32)
    out[..., 0] = x0
    out[..., 1] = x1
    out[..., 2] = x2
    out[..., 3] = x3
    return out

"""Counter-based random number streams for path simulation.

The integer Philox block generator has two interchangeable backends: a
compiled Cython kernel and a vectorized numpy fallback.  They emit identical
uint32 blocks, so backend choice never changes simulated paths.  The float
conversion (uniforms, Box-Muller normals) is shared numpy code on top of the
word blocks for the same reason.

Backend selection happens at import: the compiled module is used when
available unless ``BERMEX_RNG_BACKEND`` forces ``numpy`` or ``cython``.
"""

from __future__ import annotations

import os

import numpy as np

from . import philox_np

_requested = os.environ.get("BERMEX_RNG_BACKEND", "auto").lower()
if _requested not in ("auto", "numpy", "cython"):
    raise ValueError(f"BERMEX_RNG_BACKEND must be auto|numpy|cython, got {_requested!r}")

_impl = philox_np
_backend = "numpy"
if _requested in ("auto", "cython"):
    try:
        from . import _philox as _impl_cy

        _impl = _impl_cy
        _backend = "cython"
    except ImportError:
        if _requested == "cython":
            raise


def backend_name() -> str:
    """Active word-generator backend, ``"cython"`` or ``"numpy"``."""
    return _backend


def raw_words(
    seed: int, n_paths: int, tick_start: int, n_ticks: int, path_start: int = 0
) -> np.ndarray:
    """Raw Philox blocks, shape (n_paths, n_ticks, 4) uint32."""
    return _impl.raw_words(seed, n_paths, tick_start, n_ticks, path_start)


def _to_uniform(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    # 53-bit mantissa from two 32-bit words, offset so u is strictly in (0, 1)
    u = (hi.astype(np.uint64) << np.uint64(32)) | lo.astype(np.uint64)
    return ((u >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def uniforms(
    seed: int, n_paths: int, tick_start: int, n_ticks: int, path_start: int = 0
) -> np.ndarray:
    """Two uniforms per tick, shape (n_paths, 2 * n_ticks), values in (0, 1)."""
    w = raw_words(seed, n_paths, tick_start, n_ticks, path_start)
    out = np.empty((n_paths, 2 * n_ticks), dtype=np.float64)
    out[:, 0::2] = _to_uniform(w[..., 0], w[..., 1])
    out[:, 1::2] = _to_uniform(w[..., 2], w[..., 3])
    return out


def normals(
    seed: int, n_paths: int, tick_start: int, n_ticks: int, path_start: int = 0
) -> np.ndarray:
    """Two standard normals per tick, shape (n_paths, 2 * n_ticks).

    Box-Muller on the tick's uniform pair; the draw at a given (path, tick)
    never depends on how many paths or ticks are requested.
    """
    u = uniforms(seed, n_paths, tick_start, n_ticks, path_start)
    u1 = u[:, 0::2]
    u2 = u[:, 1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = (2.0 * np.pi) * u2
    out = np.empty_like(u)
    out[:, 0::2] = radius * np.cos(angle)
    out[:, 1::2] = radius * np.sin(angle)
    return out

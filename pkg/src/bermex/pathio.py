"""Binary dump of a PathSet.

Layout (little-endian): magic ``XPSE``, version u32, M u64, N+1 u64,
state_dim u64, measure tag u8 (0 = Q, 1 = P, 2 + n = switched at date n),
seed u64, then float64 states row-major [path][date][component].
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .models import MEASURE_P, MEASURE_Q, PathSet, TimeGrid, parse_switch_index, switched_measure

MAGIC = b"XPSE"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQBQ")


def _measure_byte(measure: str) -> int:
    if measure == MEASURE_Q:
        return 0
    if measure == MEASURE_P:
        return 1
    idx = parse_switch_index(measure)
    if idx is None or idx > 253:
        raise ValueError(f"cannot encode measure tag {measure!r}")
    return 2 + idx


def _measure_from_byte(b: int) -> str:
    if b == 0:
        return MEASURE_Q
    if b == 1:
        return MEASURE_P
    return switched_measure(b - 2)


def dump_pathset(paths: PathSet, file: str | Path) -> None:
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        paths.m,
        paths.grid.n + 1,
        paths.state_dim,
        _measure_byte(paths.measure),
        paths.seed & 0xFFFFFFFFFFFFFFFF,
    )
    with open(file, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(paths.states, dtype="<f8").tobytes())


def load_pathset(file: str | Path, grid: TimeGrid, price_cols: tuple[int, ...] | None = None) -> PathSet:
    """Read a dump back into a PathSet; the grid is supplied by the caller."""
    with open(file, "rb") as fh:
        raw = fh.read(_HEADER.size)
        magic, version, m, n_dates, dim, measure_b, seed = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError("not a path-set dump (bad magic)")
        if version != VERSION:
            raise ValueError(f"unsupported path-set dump version {version}")
        if n_dates != grid.n + 1:
            raise ValueError("dump date count does not match the supplied grid")
        data = np.frombuffer(fh.read(m * n_dates * dim * 8), dtype="<f8")
    states = data.reshape(m, n_dates, dim).astype(np.float64)
    return PathSet(states, grid, _measure_from_byte(measure_b), seed, price_cols=price_cols)

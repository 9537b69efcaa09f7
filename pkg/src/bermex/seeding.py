"""Deterministic seed derivation: stage seeds are pure functions of the
master seed and a label, so changing one pipeline stage never perturbs
another."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *labels) -> int:
    """64-bit seed from a master seed and any hashable labels."""
    text = ":".join([str(int(master))] + [str(l) for l in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")

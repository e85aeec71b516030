"""Deterministic seed derivation.

Every stochastic component draws from its own child stream, keyed by
(master seed, purpose label, index) through SHA-256. Streams are therefore
independent of evaluation order, which makes parallel reductions and
re-runs reproducible bit for bit.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["child_seed", "child_rng"]


def child_seed(master: int, label: str, index: int = 0) -> int:
    """Derive a 63-bit child seed from (master, label, index).

    Kept below 2^63 so seeds survive round trips through signed integer
    columns (CSV, int64 arrays).
    """
    payload = f"{int(master)}:{label}:{int(index)}".encode()
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def child_rng(master: int, label: str, index: int = 0) -> np.random.Generator:
    """A numpy Generator seeded from the derived child seed."""
    return np.random.default_rng(child_seed(master, label, index))

"""Row-blocked sparse storage shared by the X-side and Y-side states.

A state is a sorted array of unique integer keys plus a dense amplitude
matrix with one row per key.  The key encodes the sparse label (sigma on the
X side, (member, tau) on the Y side); the columns run over the algorithm
register, which is kept dense.
"""
from __future__ import annotations

import numpy as np

PRUNE_TOL = 1e-14


def reduce_rows(keys: np.ndarray, amps: np.ndarray, prune: float = PRUNE_TOL):
    """Merge rows with equal keys by summation and drop negligible entries."""
    keys = np.asarray(keys, dtype=np.int64)
    if keys.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, amps.shape[1]), dtype=complex)
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    amps = amps[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    if starts.size != keys.size:
        amps = np.add.reduceat(amps, starts, axis=0)
        keys = keys[starts]
    return prune_rows(keys, amps, prune)


def prune_rows(keys: np.ndarray, amps: np.ndarray, prune: float = PRUNE_TOL):
    small = np.abs(amps) < prune
    if small.any():
        amps = np.where(small, 0, amps)
    live = ~small.all(axis=1) if amps.shape[1] else np.zeros(len(keys), bool)
    if not live.all():
        keys, amps = keys[live], amps[live]
    return keys, amps


def scatter_columns(new_keys: np.ndarray, amps: np.ndarray, prune: float = PRUNE_TOL):
    """Re-block after a column-dependent relabelling.

    ``new_keys[r, a]`` is the destination key of entry ``(r, a)``.  Each
    column is a bijection on keys, so destinations never collide inside a
    column and plain assignment suffices.
    """
    rows, width = amps.shape
    if rows == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, width), dtype=complex)
    flat = new_keys.ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    out = np.zeros((uniq.size, width), dtype=complex)
    cols = np.broadcast_to(np.arange(width), (rows, width)).ravel()
    out[inv.ravel(), cols] = amps.ravel()
    return prune_rows(uniq, out, prune)


def combine(keys_a, amps_a, keys_b, amps_b, sign: float = 1.0, prune: float = PRUNE_TOL):
    keys = np.concatenate([keys_a, keys_b])
    amps = np.concatenate([amps_a, sign * amps_b], axis=0)
    return reduce_rows(keys, amps, prune)


def digits_of(codes: np.ndarray, base: int, width: int) -> np.ndarray:
    """Little-endian base-``base`` digits of each code, shape (len, width)."""
    codes = np.asarray(codes, dtype=np.int64)
    powers = base ** np.arange(width, dtype=np.int64)
    return (codes[:, None] // powers[None, :]) % base


def powers_of(base: int, width: int) -> np.ndarray:
    return base ** np.arange(width, dtype=np.int64)


def check_key_space(*factors: int) -> None:
    total = 1
    for f in factors:
        total *= int(f)
    if total >= 2**62:
        raise OverflowError(f"key space of size {total} does not fit in 64-bit keys")

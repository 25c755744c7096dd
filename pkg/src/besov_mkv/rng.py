"""Counter-based random numbers.

Every draw is a pure function of (key, stream, counter): a splitmix64 hash.
This makes per-particle streams independent of evaluation order, chunking
and thread count, and lets random Fourier modes be generated per wave vector
so that grids of different size agree on shared modes.
"""
from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(k) for k in (30, 27, 31, 11))


def mix64(z):
    """splitmix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def master_key(seed: int) -> np.uint64:
    return np.uint64(mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))


def stream_state(key, stream_ids):
    ids = np.asarray(stream_ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(np.uint64(key) + ids * GOLDEN)


def to_unit(u):
    """53-bit uniform in the open interval (0, 1)."""
    return ((u >> _S11).astype(np.float64) + 0.5) * 2.0**-53


def counter_uniforms(key, stream_ids, step: int, n_lanes: int) -> np.ndarray:
    """Uniforms of shape (len(stream_ids), n_lanes) for one step."""
    state = stream_state(key, stream_ids)
    ctr = np.uint64(step) * np.uint64(n_lanes) + np.arange(n_lanes, dtype=np.uint64)
    with np.errstate(over="ignore"):
        u = mix64(state[:, None] ^ mix64(ctr + GOLDEN)[None, :])
    return to_unit(u)


def keyed_normals(key, counters) -> np.ndarray:
    """Standard normals, one per counter, via Box-Muller on two hashed uniforms."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        u1 = to_unit(mix64(np.uint64(key) ^ mix64(c * np.uint64(2))))
        u2 = to_unit(mix64(np.uint64(key) ^ mix64(c * np.uint64(2) + np.uint64(1))))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

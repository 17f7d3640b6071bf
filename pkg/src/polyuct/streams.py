"""Counter-based random streams.

Every random draw in the package is a pure function of a 64-bit master seed
and a tuple of non-negative integer identifiers (arm, state hash, visit index,
...).  Draws are therefore independent of the order in which they are
requested, which is what lets a single run and a vectorised batch of replicas
produce bit-identical results.

The mixer is the splitmix64 finaliser.  Both a pure-Python integer path and a
numpy ``uint64`` path are provided; they agree bit for bit.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)

_U_GOLDEN = np.uint64(_GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_S30, _S27, _S31, _S11 = (np.uint64(k) for k in (30, 27, 31, 11))


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _U_M1
    z = (z ^ (z >> _S27)) * _U_M2
    return z ^ (z >> _S31)


def _is_plain_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def stream_key(seed, *ids):
    """Fold ``ids`` into ``seed``; returns an int, or a uint64 array if any input is an array."""
    if _is_plain_int(seed) and all(_is_plain_int(i) for i in ids):
        h = mix64(int(seed) + _GOLDEN)
        for i in ids:
            h = mix64(h ^ mix64((int(i) + _GOLDEN) & MASK64))
        return h
    with np.errstate(over="ignore"):
        h = _mix64_np(_as_u64(seed) + _U_GOLDEN)
        for i in ids:
            h = _mix64_np(h ^ _mix64_np(_as_u64(i) + _U_GOLDEN))
    return h


def uniform(seed, *ids):
    """Uniform variate(s) on [0, 1) with 53 random bits."""
    h = stream_key(seed, *ids)
    if isinstance(h, int):
        return (h >> 11) * _INV_2_53
    return (h >> _S11).astype(np.float64) * _INV_2_53


def replica_seed(seed, replica):
    """Seed for replica ``replica`` of a run seeded with ``seed`` (seed XOR index)."""
    if _is_plain_int(seed) and _is_plain_int(replica):
        return (int(seed) ^ int(replica)) & MASK64
    return _as_u64(seed) ^ _as_u64(replica)


def _as_u64(x) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype == np.uint64:
        return a
    if a.dtype.kind == "f":
        raise TypeError("stream identifiers must be integers")
    if a.dtype == object or (a.dtype.kind == "i" and a.size and a.min() < 0):
        return np.asarray([int(v) & MASK64 for v in a.ravel()], dtype=np.uint64).reshape(a.shape)
    return a.astype(np.uint64)


def state_hash(s):
    """64-bit hash of the float64 bit pattern of a state (or of each state in a batch)."""
    arr = np.ascontiguousarray(np.asarray(s, dtype=np.float64))
    bits = arr.view(np.uint64)
    if arr.ndim == 1:
        h = 0
        for b in bits.tolist():
            h = mix64(h ^ mix64((b + _GOLDEN) & MASK64))
        return h
    with np.errstate(over="ignore"):
        h = np.zeros(bits.shape[:-1], dtype=np.uint64)
        for k in range(bits.shape[-1]):
            h = _mix64_np(h ^ _mix64_np(bits[..., k] + _U_GOLDEN))
    return h

"""Counter-based random streams for reproducible simulation.

Draws are addressed, not sequential: the uniform consumed by vehicle ``i`` at
step ``t`` for a given purpose is a pure function of (seed, purpose, t, i).
Two runs that share a seed therefore consume identical randomness per vehicle
and step even if iteration order, vehicle counts, or model parameters differ,
which keeps particle and scenario comparisons common-random-numbered.

The mixer is SplitMix64; output is mapped to [0, 1) with 53 bits.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1

# Draw purposes. Packed into the low bits of the per-vehicle key, so keep < 8.
PERSPECTIVE = 0
SLOW_TO_START = 1
BRAKE = 2
LANE_CHANGE = 3
ARRIVAL = 4


def _mix_scalar(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _mix_array(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(0x9E3779B97F4A7C15))
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def step_base(seed: int, step: int) -> int:
    """Shared per-(seed, step) mixing base; one scalar mix reused by all the
    draws a step makes."""
    return _mix_scalar(_mix_scalar(seed & _MASK) ^ ((step & _MASK) * 0xD1342543DE82EF95 & _MASK))


def uniforms_from_base(base: int, keys: np.ndarray) -> np.ndarray:
    # same finalizer as _mix_array, chained in place on a fresh buffer
    x = np.asarray(keys, dtype=np.uint64) ^ np.uint64(base)
    x += np.uint64(0x9E3779B97F4A7C15)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    x >>= np.uint64(11)
    return x.astype(np.float64) * (1.0 / (1 << 53))


def uniform_from_base_scalar(base: int, key: int) -> float:
    """Single uniform, bit-identical to the array path for the same key."""
    return (_mix_scalar((key ^ base) & _MASK) >> 11) * (1.0 / (1 << 53))


def substream_uniform(seed: int, step: int, keys: np.ndarray) -> np.ndarray:
    """Uniforms in [0, 1) addressed by (seed, step, key).

    ``keys`` is an integer array; conventionally ``(vehicle_id << 3) | purpose``.
    """
    return uniforms_from_base(step_base(seed, step), keys)


def uniform_scalar(seed: int, step: int, key: int) -> float:
    base = _mix_scalar(_mix_scalar(seed & _MASK) ^ ((step & _MASK) * 0xD1342543DE82EF95 & _MASK))
    return (_mix_scalar(key ^ base) >> 11) * (1.0 / (1 << 53))


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a tuple of strings/ints (order-sensitive)."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1

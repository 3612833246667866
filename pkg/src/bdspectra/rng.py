"""SplitMix64 streams.

A stream with state ``s`` emits ``mix(s + k * GOLDEN)`` for k = 1, 2, ...
Trajectory i of a study seeded with ``seed`` runs on the stream whose state
is ``seed_i = mix64(seed, i) = mix(seed + (i + 1) * GOLDEN)``, i.e. the
(i+1)-th output of the parent stream. Uniforms are ``((x >> 11) + 1) * 2**-53``.
Changing any of this changes every simulated number.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["GOLDEN", "mix", "mix64", "split_seeds", "next_u64", "next_uniform", "uniforms"]

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
MASK64 = (1 << 64) - 1


@njit(cache=True, nogil=True)
def mix(z):
    """SplitMix64 finaliser on a uint64."""
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def next_u64(state):
    """Advance ``state`` (a length-1 uint64 array) and return the next output."""
    state[0] = state[0] + GOLDEN
    return mix(state[0])


@njit(cache=True, nogil=True)
def next_uniform(state):
    """Uniform on (0, 1]; never returns 0, so ``-log(u)`` is finite."""
    return (float(next_u64(state) >> _S11) + 1.0) * _INV53


def _as_u64(seed) -> np.uint64:
    return np.uint64(int(seed) & MASK64)


def mix64(seed, i) -> int:
    """Seed of sub-stream ``i`` of ``seed``."""
    with np.errstate(over="ignore"):
        s = _as_u64(seed) + np.uint64(int(i) + 1) * GOLDEN
    return int(mix(np.uint64(s)))


def split_seeds(seed, n: int) -> np.ndarray:
    """``[mix64(seed, i) for i in range(n)]`` as a uint64 array."""
    with np.errstate(over="ignore"):
        idx = np.arange(1, n + 1, dtype=np.uint64)
        z = _as_u64(seed) + idx * GOLDEN
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def uniforms(seed, n: int) -> np.ndarray:
    """First ``n`` uniforms of the stream with state ``seed``."""
    z = split_seeds(seed, n)
    return ((z >> _S11).astype(float) + 1.0) * _INV53

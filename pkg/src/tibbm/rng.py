"""Counter-based random streams.

Each replica owns a SplitMix64 stream whose starting state is a hash of
(master seed, replica index), so a replica's draws do not depend on how
replicas are scheduled across workers.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, uint64

_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> uint64(30))) * uint64(_M1)
    z = (z ^ (z >> uint64(27))) * uint64(_M2)
    return z ^ (z >> uint64(31))


@njit(cache=True)
def stream_key(seed, replica):
    """Initial state for replica ``replica`` of master ``seed``."""
    a = _mix(uint64(seed) + uint64(_GOLDEN))
    return _mix(a ^ _mix(uint64(replica) * uint64(_GOLDEN) + uint64(0x632BE59BD9B4E019)))


@njit(cache=True)
def next_u64(state):
    state[0] = state[0] + uint64(_GOLDEN)
    return _mix(state[0])


@njit(cache=True)
def uniform(state):
    """Uniform on the open interval (0, 1)."""
    return ((next_u64(state) >> uint64(11)) + 0.5) * _INV53


@njit(cache=True)
def normal(state):
    u1 = uniform(state)
    u2 = uniform(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def exponential(state, rate):
    return -math.log(uniform(state)) / rate


@njit(cache=True)
def _fill_normal(state, out):
    for i in range(out.size):
        out[i] = normal(state)


@njit(cache=True)
def _fill_uniform(state, out):
    for i in range(out.size):
        out[i] = uniform(state)


class Stream:
    """Python handle on one replica stream."""

    def __init__(self, seed: int, replica: int = 0):
        self.seed = int(seed)
        self.replica = int(replica)
        self.state = np.array([stream_key(np.uint64(self.seed), np.uint64(self.replica))], dtype=np.uint64)

    def normal(self, n: int) -> np.ndarray:
        out = np.empty(int(n))
        _fill_normal(self.state, out)
        return out

    def uniform(self, n: int) -> np.ndarray:
        out = np.empty(int(n))
        _fill_uniform(self.state, out)
        return out

    def exponential(self, rate: float, n: int) -> np.ndarray:
        return -np.log(self.uniform(n)) / rate

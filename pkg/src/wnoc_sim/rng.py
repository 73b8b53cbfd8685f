"""Seeded random streams shared by the Python and compiled kernels.

Every stream wraps a numpy ``PCG64`` bit generator. Doubles and bounded
integers are derived from raw 64-bit words with the same arithmetic that
the compiled kernel uses, so both kernels consume identical bits in
identical order and produce identical runs.
"""

from __future__ import annotations

import numpy as np

_TWO_M53 = 2.0 ** -53

# spawn-key roots; one per consumer so draw counts in one module never
# shift another module's sequence
TRAFFIC, PHY, MAC, WEIGHTS, SWEEP = range(5)


class Stream:
    __slots__ = ("bitgen", "_raw")

    def __init__(self, seed: int, *key: int):
        self.bitgen = np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key))
        self._raw = self.bitgen.random_raw

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self._raw() >> 11) * _TWO_M53

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(((self._raw() >> 11) * _TWO_M53) * n)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(self.bitgen)


def traffic_stream(seed: int, node: int) -> Stream:
    return Stream(seed, TRAFFIC, node)


def phy_stream(seed: int) -> Stream:
    return Stream(seed, PHY)


def mac_stream(seed: int, node: int) -> Stream:
    return Stream(seed, MAC, node)


def weights_stream(seed: int) -> Stream:
    return Stream(seed, WEIGHTS)


def derive_seed(seed: int, *index: int) -> int:
    """Deterministic 63-bit child seed for sweep point ``index``."""
    ss = np.random.SeedSequence(seed, spawn_key=(SWEEP, *index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

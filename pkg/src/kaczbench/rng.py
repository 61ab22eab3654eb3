"""Deterministic pseudo-random number generation.

Every random draw in this package flows through :class:`SplitMix64`, a
64-bit counter-based generator (state advances by a fixed odd constant,
the output is a bijective bit mix of the state).  Because the output of
step ``i`` depends only on ``seed + i * GAMMA``, scalar draws and bulk
(vectorized) draws produce bit-identical streams, and the whole stream
is reproducible across platforms from the seed alone.

Normal variates use the trigonometric Box-Muller transform: each pair of
uniforms yields two normals.  ``normals(k)`` with odd ``k`` consumes a
full pair and discards the spare, so the stream position after a bulk
draw is a pure function of ``k``.

Per-run streams are derived as ``seed = master_seed XOR run_index``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15

# Names recorded in dataset sidecars so files are self-describing.
PRNG_NAME = "splitmix64"
NORMAL_ALGORITHM = "box-muller"

_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 2.0 ** -53


def derive_seed(master_seed: int, run_index: int) -> int:
    """Seed for run number ``run_index`` of a campaign."""
    return (master_seed ^ run_index) & MASK64


class SplitMix64:
    """SplitMix64 generator with scalar and bulk draw methods."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """One float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def u64_block(self, count: int) -> np.ndarray:
        """``count`` raw outputs, bit-identical to repeated next_u64()."""
        if count <= 0:
            return np.empty(0, dtype=np.uint64)
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + steps * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z ^= z >> np.uint64(31)
        self._state = (self._state + count * GAMMA) & MASK64
        return z

    def uniforms(self, count: int) -> np.ndarray:
        return (self.u64_block(count) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normals(self, count: int) -> np.ndarray:
        """``count`` standard normals via Box-Muller on uniform pairs."""
        if count <= 0:
            return np.empty(0, dtype=np.float64)
        pairs = (count + 1) // 2
        u = self.uniforms(2 * pairs)
        # 1 - u1 lies in (0, 1], so the log is finite.
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        angle = (2.0 * np.pi) * u[1::2]
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:count]

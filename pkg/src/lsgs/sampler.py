"""Seeded categorical sampling of scenario masks.

The generator is splitmix64, pinned so that draw sequences are reproducible
across implementations. A uniform variate is ``(raw >> 11) * 2**-53`` and
the drawn scenario is the first canonical index whose CDF is ``>= u``.
"""

import bisect

import numpy as np

from ._validation import check_probability_vector
from .exceptions import DimensionError

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_M53 = 2.0**-53


def splitmix64_mix(z):
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Scalar splitmix64 stream; ``state`` is the full generator state."""

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return splitmix64_mix(self.state)

    def next_float(self):
        return (self.next_u64() >> 11) * _TWO_M53

    def next_below(self, n):
        """Integer in ``[0, n)`` by scaling a uniform float."""
        return min(int(self.next_float() * n), n - 1)


def splitmix64_block(seed, count, start=0):
    """Outputs ``start .. start+count-1`` of the stream seeded with ``seed``, vectorized.

    splitmix64 is counter based, so the ``n``-th output only depends on
    ``seed + (n + 1) * GOLDEN_GAMMA``.
    """
    n = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(int(seed) & MASK64) + n * np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def uniform_block(seed, count, start=0):
    raw = splitmix64_block(seed, count, start)
    return (raw >> np.uint64(11)).astype(np.float64) * _TWO_M53


def build_cdf(p):
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    return cdf


class ScenarioSampler:
    """Draws one scenario mask per call from ``p`` (or uniformly).

    Not safe to share between threads; use :meth:`spawn` for parallel streams.
    """

    def __init__(self, space, p, seed, atol=1e-9):
        p = check_probability_vector(p, atol=atol)
        if p.shape[0] != space.K:
            raise DimensionError(f"p has length {p.shape[0]}, space has K={space.K}")
        self.space = space
        self.p = p
        self.seed = int(seed) & MASK64
        self.cdf = build_cdf(p)
        self.uniform_cdf = build_cdf(np.full(space.K, 1.0 / space.K))
        self._cdf = self.cdf.tolist()
        self._uniform_cdf = self.uniform_cdf.tolist()
        self._rng = SplitMix64(self.seed)

    @classmethod
    def from_distribution(cls, dist, seed):
        return cls(dist.space, dist.p, seed)

    @property
    def rng_state(self):
        return self._rng.state

    @rng_state.setter
    def rng_state(self, state):
        self._rng.state = int(state) & MASK64

    def _pick(self, cdf, probs):
        u = self._rng.next_float()
        k = bisect.bisect_left(cdf, u)
        if probs is not None and probs[k] == 0.0:
            # only reachable when u lands exactly on a cdf step or in the
            # round-off gap below the forced cdf[-1] = 1
            nz = np.flatnonzero(probs)
            later = nz[nz > k]
            k = int(later[0]) if later.size else int(nz[-1])
        return self.space[k]

    def draw(self):
        return self._pick(self._cdf, self.p)

    def draw_uniform(self):
        return self._pick(self._uniform_cdf, None)

    def draw_many(self, n, uniform=False):
        fn = self.draw_uniform if uniform else self.draw
        return [fn() for _ in range(n)]

    def spawn(self, index):
        """Sampler over the same distribution on a stream derived from ``seed ^ index``."""
        child = ScenarioSampler(self.space, self.p, self.seed)
        child._rng = SplitMix64(splitmix64_mix((self.seed ^ int(index)) & MASK64))
        return child

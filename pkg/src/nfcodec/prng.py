"""SplitMix64 pseudo-random generator.

Every random quantity the codec depends on (the fixed initialization offsets,
training noise, batch order) is drawn from this generator so that the stream
is reproducible from an integer seed with a published algorithm:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

Uniform doubles use the top 53 bits; normals use Box-Muller on consecutive
uniform pairs (cosine branch first, then sine).
"""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(_GOLDEN)
            out = _mix(z)
        self.state = (self.state + n * _GOLDEN) & _MASK
        return out

    def split(self) -> "SplitMix64":
        """Child generator seeded from the next output; advances this one."""
        return SplitMix64(int(self.next_u64(1)[0]))

    def uniform(self, shape) -> np.ndarray:
        """Doubles in [0, 1)."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape)

    def normal(self, shape) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        u = self.uniform((pairs, 2))
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        out = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1).reshape(-1)
        return out[:n].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        # random-key sort on our own stream; numpy's shuffle is not part of the contract
        keys = self.uniform((n,))
        return np.argsort(keys, kind="stable")

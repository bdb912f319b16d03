"""Counter-based pseudo-random numbers with a fully documented algorithm.

Every random choice in the engine (synthetic data, fold shuffles, label
permutations) flows through this generator so that any implementation, in
any language, can reproduce the exact streams bit for bit.

Algorithm
---------
The raw stream is SplitMix64 used in counter mode.  With GAMMA =
0x9E3779B97F4A7C15 and all arithmetic mod 2**64::

    raw(seed, i) = mix64(seed + (i + 1) * GAMMA)

    mix64(z):
        z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
        z ^= z >> 27;  z *= 0x94D049BB133111EB
        z ^= z >> 31
        return z

Derived quantities:

* uniform double in [0, 1):  ``u(i) = (raw(i) >> 11) * 2**-53``
* standard normals: Box-Muller on consecutive counter pairs (2k, 2k+1)::

      r  = sqrt(-2 * ln(1 - u(2k)))
      z0 = r * cos(2*pi * u(2k+1)),   z1 = r * sin(2*pi * u(2k+1))

  ``1 - u`` lies in (0, 1], so the log never sees zero.
* bounded int in [0, n): ``min(floor(u * n), n - 1)``
* shuffle: Fisher-Yates from the top using the bounded ints above.

Independent substreams come from ``child_seed(seed, index)`` =
``mix64(mix64(seed) ^ mix64(index + 1))``; parallel workers draw from
``(seed, task index)`` so schedules cannot change results.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def mix64(z: int) -> int:
    z &= _MASK
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z


def child_seed(seed: int, index: int) -> int:
    """Seed of the substream `index` derived from `seed`."""
    return mix64(mix64(seed) ^ mix64(index + 1))


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


class Stream:
    """A seeded counter stream; draws advance the counter deterministically."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self.counter = 0

    def _raw_block(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * np.uint64(GAMMA)
            return _mix64_vec(z)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1)."""
        return (self._raw_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, shape) -> np.ndarray:
        """Standard normals via Box-Muller; odd counts burn one uniform."""
        n = int(np.prod(shape)) if not np.isscalar(shape) else int(shape)
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        out = out[:n]
        return out if np.isscalar(shape) else out.reshape(shape)

    def randint(self, n: int) -> int:
        """One int uniform on [0, n)."""
        u = self.uniform(1)[0]
        return min(int(u * n), n - 1)

    def shuffle_index(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of arange(n); consumes n-1 uniforms."""
        perm = list(range(n))
        if n > 1:
            u = self.uniform(n - 1)
            for step, i in enumerate(range(n - 1, 0, -1)):
                j = min(int(u[step] * (i + 1)), i)
                perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)

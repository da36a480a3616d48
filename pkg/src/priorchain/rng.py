"""Reproducible multi-stream random number generation.

A :class:`RngStream` is identified by ``(master_seed, stream_index)``; the
same pair always yields the same value sequence, and distinct indices give
statistically independent streams (see ``_kernels`` for the splitting rule).
A stream must not be shared between concurrent callers; spawn one stream per
worker instead.

Batch methods (``uniforms``, ``normals``) are vectorised over a counter and
consume the stream exactly like the equivalent sequence of scalar calls, so
mixing scalar and batch draws keeps reproducibility.
"""

import numpy as np

from . import _kernels as K
from .errors import DomainError

_U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix64_vec(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class RngStream:
    """One deterministic SplitMix64 stream."""

    __slots__ = ("master_seed", "stream_index", "_state")

    def __init__(self, master_seed, stream_index=0):
        if not (0 <= int(stream_index)):
            raise DomainError("stream_index must be non-negative")
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_index = int(stream_index)
        self._state = K.call(K.stream_state, np.uint64(self.master_seed),
                             np.uint64(self.stream_index))

    def spawn(self, stream_index):
        """A fresh stream with the same master seed and the given index."""
        return RngStream(self.master_seed, stream_index)

    # -- scalar draws -------------------------------------------------------

    def uniform(self):
        self._state, u = K.call(K.next_uniform, self._state)
        return u

    def normal(self):
        self._state, z = K.call(K.next_normal, self._state)
        return z

    def gamma(self, shape):
        if shape <= 0:
            raise DomainError("gamma shape must be positive")
        self._state, g = K.call(K.next_gamma, self._state, float(shape))
        return g

    # -- batch draws --------------------------------------------------------

    def uniforms(self, n):
        """n uniforms on (0, 1], identical to n scalar ``uniform()`` calls."""
        counters = self._state + K.GAMMA * np.arange(1, n + 1, dtype=np.uint64)
        z = _mix64_vec(counters)
        with np.errstate(over="ignore"):
            self._state = np.uint64(self._state + K.GAMMA * np.uint64(n))
        return (np.float64(z >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)

    def normals(self, n):
        """n normals, identical to n scalar ``normal()`` calls."""
        u = self.uniforms(2 * n)
        return np.sqrt(-2.0 * np.log(u[0::2])) * np.cos(2.0 * np.pi * u[1::2])

    def normal_vector(self, p):
        """One p-vector of normals under the pairwise consumption protocol."""
        out = np.empty(p)
        self._state = K.call(K.fill_normal_vector, self._state, out)
        return out

    # -- distributional draws used across the package -----------------------

    def ncx2(self, p, lam):
        self._state, v = K.call(K.next_ncx2, self._state, int(p), float(lam))
        return v

    def ncx2_batch(self, p, lam, n):
        out = np.empty(n)
        self._state = K.call(K.fill_ncx2, self._state, int(p), float(lam), out)
        return out

    def sphere(self, p):
        out = np.empty(p)
        self._state = K.call(K.sphere_draw, self._state, out)
        return out

    def vmf(self, mean_dir, kappa):
        mu = np.asarray(mean_dir, dtype=np.float64)
        out = np.empty(mu.shape[0])
        work = np.empty(mu.shape[0])
        self._state = K.call(K.vmf_draw, self._state, mu, float(kappa), out, work)
        return out

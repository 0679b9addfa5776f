"""Counter-based random streams.

Every random quantity in the package is a pure function of a 64-bit key and
an integer counter, so results do not depend on iteration order, batching or
threading.  A stream key is obtained from a master seed by repeated
:func:`derive` calls (one per index level, e.g. replica then edge), and the
k-th uniform of a stream is the k-th output of a SplitMix64 generator whose
state was initialised with that key.
"""

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

UINT64_MAX = 2**64 - 1


@nb.njit(cache=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def derive(key, index):
    """Child key for non-negative ``index`` under ``key``."""
    return mix64(mix64(np.uint64(key) ^ _SALT) + (np.uint64(index) + _ONE) * _GOLDEN)


@nb.njit(cache=True)
def zigzag(x):
    """Map a signed integer to a non-negative one (0, -1, 1, -2, ... -> 0, 1, 2, 3, ...)."""
    if x >= 0:
        return np.uint64(2 * x)
    return np.uint64(-2 * x - 1)


@nb.njit(cache=True)
def uniform(key, k):
    """The k-th uniform on [0, 1) of stream ``key`` (53-bit resolution)."""
    z = mix64(np.uint64(key) + (np.uint64(k) + _ONE) * _GOLDEN)
    return float(z >> _S11) * _INV53


@nb.njit(cache=True)
def exponential(key, k, rate):
    """Exponential variate with the given rate, by inversion of ``uniform``."""
    return -np.log1p(-uniform(key, k)) / rate


def check_seed(seed):
    """Validate a user seed and return it as ``np.uint64``."""
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= UINT64_MAX:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    return np.uint64(seed)


def replica_seed(master, replica):
    """Key of replica ``replica`` under master seed ``master``.

    Batch Monte Carlo runs use exactly these keys, so any replica can be
    reproduced by passing ``replica_seed(master, i)`` to a single-run API.
    """
    return int(derive(check_seed(master), np.uint64(replica)))


@nb.njit(cache=True)
def uniforms(key, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = uniform(key, k)
    return out

"""Stateless counter-based random numbers keyed by integers.

Every value is a pure function of ``(seed, stream tag, integer key...)`` so any
lattice site or walk increment can be regenerated in any order, from any
thread, without carrying generator state around.
"""
import numpy as np
from numba import njit

TAG_ETA = np.uint64(0x243F6A8885A308D3)
TAG_DELTA = np.uint64(0x13198A2E03707344)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def mix64(z):
    """SplitMix64 finalizer; a bijection on uint64."""
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def to_unit(h):
    """Map a 64-bit hash to a double in [0, 1) using the top 53 bits."""
    return (h >> _S11) * _INV53


@njit(cache=True)
def stream_key(seed, tag):
    return mix64(np.uint64(seed) ^ tag)


@njit(cache=True)
def index_uniform(key, k):
    return to_unit(mix64(key ^ mix64(np.uint64(k))))


@njit(cache=True)
def site_uniform(key, coords):
    h = key
    for i in range(coords.shape[0]):
        h = mix64(h ^ np.uint64(coords[i]))
    return to_unit(h)


@njit(cache=True)
def inverse_cdf(u, cdf):
    # cdf is increasing with cdf[-1] == 1.0
    for j in range(cdf.shape[0]):
        if u < cdf[j]:
            return j
    return cdf.shape[0] - 1


@njit(cache=True)
def index_draws(seed, start, count, values, cdf):
    """Draws of a finite law at integer keys ``start .. start+count-1``."""
    key = stream_key(seed, TAG_ETA)
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        out[i] = values[inverse_cdf(index_uniform(key, start + i), cdf)]
    return out


@njit(cache=True)
def site_draws(seed, points, values, cdf):
    """Draws of a finite integer law at each row of ``points``."""
    key = stream_key(seed, TAG_DELTA)
    out = np.empty(points.shape[0], dtype=np.int64)
    for i in range(points.shape[0]):
        out[i] = values[inverse_cdf(site_uniform(key, points[i]), cdf)]
    return out


@njit(cache=True)
def box_site_draws(seed, radius, d, values, cdf):
    """Draws at every site of the cube [-radius, radius]^d in C order."""
    side = 2 * radius + 1
    total = side ** d
    key = stream_key(seed, TAG_DELTA)
    out = np.empty(total, dtype=np.int64)
    coords = np.empty(d, dtype=np.int64)
    for flat in range(total):
        rem = flat
        for axis in range(d - 1, -1, -1):
            coords[axis] = rem % side - radius
            rem //= side
        out[flat] = values[inverse_cdf(site_uniform(key, coords), cdf)]
    return out

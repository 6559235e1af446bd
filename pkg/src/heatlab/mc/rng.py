"""Counter-based random numbers.

Every draw is a pure function of ``(seed, path index, draw counter)``: the
SplitMix64 finaliser applied to a Weyl sequence keyed per path. Paths can be
simulated in any order, on any worker, and reproduce bit for bit.

Normals come from a 256-layer ziggurat (Marsaglia and Tsang) fed by the same
64-bit words; a rejection simply consumes more counters of the path's stream.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, uint64

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(uint64(uint64), inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> uint64(30))) * _M1
    z = (z ^ (z >> uint64(27))) * _M2
    return z ^ (z >> uint64(31))


@njit(cache=True)
def _seed_key(seed):
    return mix64(uint64(seed) ^ uint64(0x5DEECE66D))


def seed_key(seed) -> np.uint64:
    """Per-run key; always a ``numpy.uint64`` so compiled callers see one type."""
    return np.uint64(_seed_key(np.uint64(seed)))


@njit(cache=True)
def path_key(skey, index):
    return mix64(uint64(skey) + (uint64(index) + uint64(1)) * GOLDEN)


@njit(inline="always", cache=True)
def uniform(key, counter):
    """Uniform on the open interval (0, 1)."""
    bits = mix64(uint64(key) + (uint64(counter) + uint64(1)) * GOLDEN)
    return (float(bits >> uint64(11)) + 0.5) * _INV53


def _ziggurat_tables(layers: int = 256, r: float = 3.6541528853610088,
                    area: float = 0.00492867323399):
    f = lambda v: math.exp(-0.5 * v * v)  # noqa: E731
    x = np.empty(layers + 1)
    x[0] = area / f(r)
    x[1] = r
    for i in range(1, layers - 1):
        x[i + 1] = math.sqrt(-2.0 * math.log(area / x[i] + f(x[i])))
    x[layers] = 0.0
    fx = np.exp(-0.5 * x * x)
    return x, fx


_ZX, _ZF = _ziggurat_tables()
_ZR = 3.6541528853610088


@njit(cache=True)
def normal(key, counter):
    """One N(0, 1) draw starting at ``counter``; returns ``(value, next counter)``."""
    while True:
        bits = mix64(uint64(key) + (uint64(counter) + uint64(1)) * GOLDEN)
        counter += 1
        i = int(bits & uint64(255))
        neg = (bits >> uint64(8)) & uint64(1)
        u = float(bits >> uint64(11)) * _INV53
        xx = u * _ZX[i]
        if xx < _ZX[i + 1]:
            return (-xx if neg else xx), counter
        if i == 0:
            # tail beyond r
            while True:
                a = -math.log(uniform(key, counter)) / _ZR
                b = -math.log(uniform(key, counter + 1))
                counter += 2
                if 2.0 * b > a * a:
                    v = _ZR + a
                    return (-v if neg else v), counter
        y = _ZF[i + 1] + uniform(key, counter) * (_ZF[i] - _ZF[i + 1])
        counter += 1
        if y < math.exp(-0.5 * xx * xx):
            return (-xx if neg else xx), counter


@njit(inline="always", cache=True)
def normal_pair(key, counter):
    """Two independent N(0, 1) from draws ``counter`` and ``counter + 1`` (Box-Muller)."""
    u1 = uniform(key, counter)
    u2 = uniform(key, counter + 1)
    rad = math.sqrt(-2.0 * math.log(u1))
    ang = 2.0 * math.pi * u2
    return rad * math.cos(ang), rad * math.sin(ang)


@njit(cache=True)
def uniforms(seed, index, count):
    """``count`` uniforms of one path stream; mainly for tests."""
    key = path_key(_seed_key(uint64(seed)), index)
    out = np.empty(count)
    for k in range(count):
        out[k] = uniform(key, k)
    return out


@njit(cache=True)
def normals(seed, index, count):
    """``count`` ziggurat normals of one path stream; mainly for tests."""
    key = path_key(_seed_key(uint64(seed)), index)
    out = np.empty(count)
    ctr = 0
    for k in range(count):
        out[k], ctr = normal(key, ctr)
    return out

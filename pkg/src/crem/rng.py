"""Counter-based Gaussian streams.

Every random number in the package is a pure function of
(master_seed, replicate, node, draw), so results never depend on how
replicates are spread over threads.

Stream layout
-------------
* ``mix64`` is the splitmix64 finaliser (Steele, Lea & Flood 2014).
* ``stream_key(seed, replicate) = mix64(mix64(seed + GOLDEN) + (replicate + 1) * GOLDEN)``
  (all arithmetic mod 2**64).
* The j-th uniform word of node ``node`` is ``mix64(key + (node * 2**16 + j) * GOLDEN)``,
  i.e. each node owns a contiguous block of 65536 splitmix64 counters.
* A standard normal is produced from those words by the 128-layer ziggurat of
  Marsaglia & Tsang in the layout of Doornik (2005, "ZIGNOR"): the low 7 bits
  of a word pick the layer, its top 53 bits the abscissa; the base strip falls
  back to Marsaglia's exponential tail method.  No inverse CDF is used.

Nodes are numbered breadth-first from 0, root excluded, so node ``j`` at depth
``d`` (1-based) and position ``i`` has ``j = 2**d - 2 + i``.  Walk step ``n``
uses node ``n - 1``.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_U53 = 1.0 / 9007199254740992.0
_NODE_SHIFT = np.uint64(16)

# second branch of a coupled walk pair lives in its own node range
SECOND_BRANCH_NODE = 1 << 30


def _ziggurat_tables(layers=128, r=3.442619855899, v=9.91256303526217e-3):
    x = np.zeros(layers + 1)
    f = math.exp(-0.5 * r * r)
    x[0] = v / f
    x[1] = r
    for i in range(2, layers):
        x[i] = math.sqrt(-2.0 * math.log(v / x[i - 1] + f))
        f = math.exp(-0.5 * x[i] * x[i])
    return x, x[1:] / x[:-1]


ZIG_R = 3.442619855899
ZIG_X, ZIG_RATIO = _ziggurat_tables()


@nb.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always", cache=True)
def _word(key, ctr):
    return mix64(key + ctr * GOLDEN)


@nb.njit(inline="always", cache=True)
def node_normal(key, node):
    """Standard normal owned by ``node`` of the stream ``key``."""
    t = np.uint64(node) << _NODE_SHIFT
    while True:
        z = _word(key, t)
        t += np.uint64(1)
        i = np.int64(z & np.uint64(127))
        u = 2.0 * (np.float64(z >> np.uint64(11)) * _U53) - 1.0
        if abs(u) < ZIG_RATIO[i]:
            return u * ZIG_X[i]
        if i == 0:
            while True:
                a = _word(key, t)
                b = _word(key, t + np.uint64(1))
                t += np.uint64(2)
                x = math.log((np.float64(a >> np.uint64(11)) + 1.0) * _U53) / ZIG_R
                y = math.log((np.float64(b >> np.uint64(11)) + 1.0) * _U53)
                if -2.0 * y >= x * x:
                    return x - ZIG_R if u < 0.0 else ZIG_R - x
        x = u * ZIG_X[i]
        f0 = math.exp(-0.5 * (ZIG_X[i] * ZIG_X[i] - x * x))
        f1 = math.exp(-0.5 * (ZIG_X[i + 1] * ZIG_X[i + 1] - x * x))
        w = _word(key, t)
        t += np.uint64(1)
        if f1 + (f0 - f1) * (np.float64(w >> np.uint64(11)) * _U53) < 1.0:
            return x


@nb.njit(cache=True)
def _stream_key(seed, replicate):
    return mix64(mix64(seed + GOLDEN) + (replicate + np.uint64(1)) * GOLDEN)


def stream_key(seed: int, replicate: int = 0) -> np.uint64:
    # numba boxes uint64 results as Python ints; keep the unsigned dtype explicit
    key = _stream_key(np.uint64(int(seed) & _MASK64), np.uint64(int(replicate) & _MASK64))
    return np.uint64(key)


def derive_seed(seed: int, *labels: int) -> int:
    """Child seed for a labelled sub-experiment (e.g. one grid point)."""
    s = int(seed) & _MASK64
    for lab in labels:
        s = int(stream_key(s, int(lab) & _MASK64))
    return s


@nb.njit(cache=True)
def _normals(key, first_node, out):
    for j in range(out.size):
        out[j] = node_normal(key, first_node + np.uint64(j))


def normals(seed: int, replicate: int, count: int, first_node: int = 0) -> np.ndarray:
    """``count`` normals of nodes first_node, first_node+1, ... (mostly for testing)."""
    out = np.empty(count)
    _normals(stream_key(seed, replicate), np.uint64(first_node), out)
    return out


@nb.njit(cache=True)
def _replicate_keys(seed, first, count):
    keys = np.empty(count, dtype=np.uint64)
    for r in range(count):
        keys[r] = _stream_key(seed, np.uint64(first + r))
    return keys


def replicate_keys(seed: int, first: int, count: int) -> np.ndarray:
    """Stream keys of replicates first, ..., first+count-1."""
    return _replicate_keys(np.uint64(int(seed) & _MASK64), int(first), int(count))

"""Exact samplers for the CREM field and its reduced random walks."""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import DepthTooLarge, DomainError, SplitOutOfRange
from .profile import CovarianceProfile, increment_variances
from .rng import SECOND_BRANCH_NODE, node_normal, replicate_keys, stream_key

MAX_DEPTH = 26


@dataclass(frozen=True, eq=False)
class TreeSample:
    """One realisation of the subtree field X^(k) on a binary tree of depth N-k.

    ``node_values`` is breadth-first: depth d occupies
    ``node_values[2**d - 2 : 2**(d+1) - 2]``.  A leaves-only sample (length
    ``2**depth``) is allowed but cannot be truncated.
    """

    profile: CovarianceProfile
    N: int
    offset: int
    node_values: np.ndarray
    seed: int
    replicate: int = 0

    @property
    def depth(self) -> int:
        return self.N - self.offset

    @property
    def has_internal_nodes(self) -> bool:
        return self.node_values.size == 2 ** (self.depth + 1) - 2

    def level(self, d: int) -> np.ndarray:
        """Values of the 2**d nodes at depth d (1 <= d <= depth)."""
        if not 1 <= d <= self.depth:
            raise DomainError(f"depth {d} outside 1..{self.depth}")
        if d < self.depth and not self.has_internal_nodes:
            raise DomainError("sample holds leaves only")
        if not self.has_internal_nodes:
            return self.node_values
        return self.node_values[2**d - 2 : 2 ** (d + 1) - 2]

    @property
    def leaves(self) -> np.ndarray:
        return self.level(self.depth)


@dataclass(frozen=True, eq=False)
class WalkSample:
    values: np.ndarray  # S_1 .. S_{N-k}
    offset: int
    seed: int
    replicate: int = 0


@dataclass(frozen=True, eq=False)
class CoupledWalkSample:
    split: int
    first: np.ndarray
    second: np.ndarray
    offset: int
    seed: int
    replicate: int = 0


def _check_depth(N, k, limit=MAX_DEPTH):
    if N < 1 or k < 0:
        raise DomainError(f"need N>=1 and k>=0, got N={N}, k={k}")
    depth = N - k
    if depth < 1:
        raise DomainError(f"subtree depth N-k must be at least 1, got {depth}")
    if depth > limit:
        raise DepthTooLarge(f"depth {depth} exceeds the limit {limit}")
    return depth


@nb.njit(nogil=True)
def _fill_tree(key, sds, out):
    depth = sds.size
    for d in range(1, depth + 1):
        off = (1 << d) - 2
        poff = (1 << (d - 1)) - 2
        sd = sds[d - 1]
        for i in range(1 << d):
            parent = out[poff + (i >> 1)] if d > 1 else 0.0
            out[off + i] = parent + sd * node_normal(key, np.uint64(off + i))


@nb.njit(nogil=True)
def _fill_leaves(key, sds, buf):
    # in place, children overwrite parents from the right end of each level
    depth = sds.size
    buf[0] = 0.0
    for d in range(1, depth + 1):
        off = (1 << d) - 2
        sd = sds[d - 1]
        for i in range((1 << d) - 1, -1, -1):
            buf[i] = buf[i >> 1] + sd * node_normal(key, np.uint64(off + i))


@nb.njit(nogil=True)
def _fill_leaves_barrier(key, sds, upper, buf, alive):
    """Leaves plus one survival flag per barrier row of ``upper`` (nb x depth)."""
    depth = sds.size
    nbar = upper.shape[0]
    buf[0] = 0.0
    for b in range(nbar):
        alive[b, 0] = 1
    for d in range(1, depth + 1):
        off = (1 << d) - 2
        sd = sds[d - 1]
        for i in range((1 << d) - 1, -1, -1):
            v = buf[i >> 1] + sd * node_normal(key, np.uint64(off + i))
            buf[i] = v
            for b in range(nbar):
                alive[b, i] = alive[b, i >> 1] & (v <= upper[b, d - 1])


@nb.njit(nogil=True)
def leaves_block(keys, sds, out):
    for r in range(keys.size):
        _fill_leaves(keys[r], sds, out[r])


@nb.njit(nogil=True)
def leaves_block_barrier(keys, sds, upper, out, alive):
    for r in range(keys.size):
        _fill_leaves_barrier(keys[r], sds, upper, out[r], alive[r])


def tree_sds(profile: CovarianceProfile, N: int, k: int) -> np.ndarray:
    return np.sqrt(increment_variances(profile, N, k))


def sample_tree(profile: CovarianceProfile, N: int, k: int, seed: int, replicate: int = 0) -> TreeSample:
    """Exact sample of (X^(k)_u) on every node of the depth N-k tree.

    Level d is its parent level plus independent N(0, N(A((d+k)/N)-A((d+k-1)/N)))
    increments.  Replicate ``r`` of master seed ``s`` reproduces the trees used
    by the batch estimators for the same (s, r).
    """
    depth = _check_depth(N, k)
    out = np.empty(2 ** (depth + 1) - 2)
    _fill_tree(stream_key(seed, replicate), tree_sds(profile, N, k), out)
    out.setflags(write=False)
    return TreeSample(profile, N, k, out, int(seed), int(replicate))


@nb.njit(nogil=True)
def _walk(key, sds, first_node, out):
    s = 0.0
    for n in range(sds.size):
        s += sds[n] * node_normal(key, np.uint64(first_node + n))
        out[n] = s


def sample_walk(profile: CovarianceProfile, N: int, k: int, seed: int, replicate: int = 0) -> WalkSample:
    """Inhomogeneous Gaussian walk with the law of one root-to-leaf path."""
    _check_depth(N, k, limit=10**9)
    sds = tree_sds(profile, N, k)
    out = np.empty(sds.size)
    _walk(stream_key(seed, replicate), sds, 0, out)
    return WalkSample(out, k, int(seed), int(replicate))


def sample_coupled_walks(profile: CovarianceProfile, N: int, k: int, split: int, seed: int, replicate: int = 0) -> CoupledWalkSample:
    """Two walks sharing their first ``split`` steps, independent afterwards."""
    depth = _check_depth(N, k, limit=10**9)
    if not 0 <= split <= depth - 1:
        raise SplitOutOfRange(f"split must lie in 0..{depth - 1}, got {split}")
    sds = tree_sds(profile, N, k)
    key = stream_key(seed, replicate)
    first = np.empty(depth)
    _walk(key, sds, 0, first)
    tail = np.empty(depth - split)
    _walk(key, sds[split:], SECOND_BRANCH_NODE + split, tail)
    second = first.copy()
    base = first[split - 1] if split > 0 else 0.0
    second[split:] = base + tail
    return CoupledWalkSample(split, first, second, k, int(seed), int(replicate))


@nb.njit(nogil=True)
def walk_endpoints(seed_keys, sds, split, out_first, out_second):
    """Endpoints of coupled walks for each stream key (split < 0: single walk)."""
    m = sds.size
    for r in range(seed_keys.size):
        key = seed_keys[r]
        s = 0.0
        shared = 0.0
        for n in range(m):
            s += sds[n] * node_normal(key, np.uint64(n))
            if n == split - 1:
                shared = s
        out_first[r] = s
        if split >= 0:
            t = shared
            for n in range(split, m):
                t += sds[n] * node_normal(key, np.uint64(SECOND_BRANCH_NODE + n))
            out_second[r] = t


def coupled_endpoints(profile, N, k, split, seed, reps):
    """Vectorised endpoints of ``reps`` coupled walk pairs; replicate r matches sample_coupled_walks(..., replicate=r)."""
    depth = _check_depth(N, k, limit=10**9)
    if not 0 <= split <= depth - 1:
        raise SplitOutOfRange(f"split must lie in 0..{depth - 1}, got {split}")
    keys = replicate_keys(seed, 0, reps)
    a = np.empty(reps)
    b = np.empty(reps)
    walk_endpoints(keys, tree_sds(profile, N, k), split, a, b)
    return a, b

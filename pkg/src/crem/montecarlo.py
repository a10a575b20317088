"""Replicate-parallel Monte Carlo over whole trees.

Replicates are cut into fixed blocks that depend only on (reps, depth); the
thread count decides who computes a block, never what is computed, and every
block writes into its own slice of the result arrays.  Results are therefore
bit-identical for any number of threads.
"""

from __future__ import annotations

import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .partition import BarrierParams, barrier_levels
from .profile import LOG2, CovarianceProfile
from .rng import replicate_keys
from .sampler import _check_depth, leaves_block, leaves_block_barrier, tree_sds

BLOCK_NODES = 1 << 20
MEMORY_BUDGET = 1 << 31  # bytes of leaf buffers live at once


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("CREM_THREADS", "1") or 1)
    return max(1, int(threads))


def blocks(reps: int, size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + size, reps)) for lo in range(0, reps, size)]


def run_blocks(fn, spans, threads: int) -> None:
    if threads == 1 or len(spans) == 1:
        for lo, hi in spans:
            fn(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(fn, lo, hi) for lo, hi in spans]:
            fut.result()


@dataclass
class TreeBatch:
    """Per-replicate summaries of ``reps`` independent trees."""

    log_z: np.ndarray  # (reps, len(betas))
    log_z_trunc: np.ndarray | None  # (reps, len(betas)) or None
    max_leaf: np.ndarray  # (reps,)
    betas: tuple[float, ...]
    depth: int


CHUNK = 1 << 15


def _log_sums(X, betas, depth, alive=None):
    """Row-wise log partition functions for each beta (and its survival mask).

    The exponentials are summed in cache-sized column chunks; the order of
    the additions depends only on the row length.
    """
    R, L = X.shape
    nb_ = len(betas)
    out = np.empty((R, nb_))
    if alive is None:
        tops = np.repeat(X.max(axis=1)[:, None], nb_, axis=1)
    else:
        tops = np.empty((R, nb_))
        for j in range(nb_):
            tops[:, j] = np.where(alive[:, j, :], X, -np.inf).max(axis=1)
    dead = ~np.isfinite(tops)
    tops[dead] = 0.0
    acc = np.zeros((R, nb_))
    T = np.empty((R, min(CHUNK, L)))
    for lo in range(0, L, CHUNK):
        hi = min(lo + CHUNK, L)
        t = T[:, : hi - lo]
        for j, beta in enumerate(betas):
            np.subtract(X[:, lo:hi], tops[:, j, None], out=t)
            np.multiply(t, beta, out=t)
            np.exp(t, out=t)
            if alive is not None:
                t *= alive[:, j, lo:hi]
            acc[:, j] += t.sum(axis=1)
    with np.errstate(divide="ignore"):
        for j, beta in enumerate(betas):
            shift = beta * tops[:, j] if beta != 0.0 else 0.0
            out[:, j] = shift + depth * LOG2 + np.log(acc[:, j] / L)
    out[dead] = -np.inf
    return out


_scratch = threading.local()


def _buffers(rows, leaves, nbar):
    """Per-thread leaf and survival buffers, reused across blocks."""
    need = (rows, leaves, nbar)
    if rows * leaves > BLOCK_NODES:
        alive = np.empty((rows, nbar, leaves), dtype=np.uint8) if nbar else None
        return np.empty((rows, leaves)), alive
    if getattr(_scratch, "shape", None) != need:
        _scratch.X = np.empty((rows, leaves))
        _scratch.alive = np.empty((rows, nbar, leaves), dtype=np.uint8) if nbar else None
        _scratch.shape = need
    return _scratch.X, _scratch.alive


def tree_batch(
    profile: CovarianceProfile,
    N: int,
    k: int,
    seed: int,
    reps: int,
    betas=(),
    barriers: list[BarrierParams] | None = None,
    threads: int | None = None,
    limit: int = 26,
) -> TreeBatch:
    """Sample ``reps`` trees and keep log Z (and log Z^<=) for every beta.

    Replicate r is the tree ``sample_tree(profile, N, k, seed, replicate=r)``.
    ``barriers`` (one per beta) switches on the truncated sums.
    """
    depth = _check_depth(N, k, limit)
    betas = tuple(float(b) for b in betas)
    if barriers is not None and len(barriers) != len(betas):
        raise ValueError("need exactly one barrier per beta")
    sds = tree_sds(profile, N, k)
    leaves = 1 << depth
    block = max(1, BLOCK_NODES // leaves)
    threads = resolve_threads(threads)
    threads = max(1, min(threads, MEMORY_BUDGET // (3 * 8 * leaves * block)))

    log_z = np.empty((reps, len(betas)))
    log_zt = np.empty((reps, len(betas))) if barriers is not None else None
    max_leaf = np.empty(reps)
    upper = None
    if barriers is not None:
        upper = np.array([barrier_levels(profile, N, k, b, bar) for b, bar in zip(betas, barriers)])

    def work(lo, hi):
        keys = replicate_keys(seed, lo, hi - lo)
        Xb, ab = _buffers(block, leaves, 0 if upper is None else upper.shape[0])
        X = Xb[: hi - lo]
        if upper is None:
            leaves_block(keys, sds, X)
        else:
            alive = ab[: hi - lo]
            leaves_block_barrier(keys, sds, upper, X, alive)
            log_zt[lo:hi] = _log_sums(X, betas, depth, alive)
        max_leaf[lo:hi] = X.max(axis=1)
        if betas:
            log_z[lo:hi] = _log_sums(X, betas, depth)

    run_blocks(work, blocks(reps, block), threads)
    return TreeBatch(log_z, log_zt, max_leaf, betas, depth)


def mean_and_stderr(x: np.ndarray) -> tuple[float, float]:
    """Sample mean and sd/sqrt(n); a constant sample returns its value exactly."""
    x = np.asarray(x, dtype=float)
    if x.size and np.all(x == x[0]):
        return float(x[0]), 0.0
    if x.size < 2:
        return float(x.mean()), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo (or quadrature, stderr 0) value with its standard error."""

    mean: float
    stderr: float
    reps: int

    def agrees(self, other: "Estimate", z: float = 3.0) -> bool:
        return agree(self.mean, self.stderr, other.mean, other.stderr, z)


def agree(m1: float, se1: float, m2: float, se2: float, z: float = 3.0) -> bool:
    """|m1 - m2| <= z * sqrt(se1^2 + se2^2)."""
    return abs(m1 - m2) <= z * math.sqrt(se1 * se1 + se2 * se2)


WALK_BLOCK = 1 << 16


def replicate_map(kernel, args, reps: int, seed: int, threads: int | None = None) -> np.ndarray:
    """Run ``kernel(keys, *args, out)`` over fixed replicate blocks; returns ``out``."""
    out = np.empty(reps)

    def work(lo, hi):
        kernel(replicate_keys(seed, lo, hi - lo), *args, out[lo:hi])

    run_blocks(work, blocks(reps, WALK_BLOCK), resolve_threads(threads))
    return out

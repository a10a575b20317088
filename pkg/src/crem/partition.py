"""Partition functions in the log domain.

Log values are plain floats; ``LOG_ZERO`` (-inf) stands for log 0, which is a
legitimate outcome of a truncated partition function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MissingInternalNodes
from .profile import LOG2, CovarianceProfile, cumulative_variances, eval_A
from .sampler import TreeSample

LOG_ZERO = -math.inf


@dataclass(frozen=True)
class BarrierParams:
    """Slope ``a`` and offset ``b`` of the truncation barrier."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError(f"barrier needs a > 0 and b > 0, got a={self.a}, b={self.b}")


def log_mean_exp(values: np.ndarray, beta: float, mask: np.ndarray | None = None) -> float:
    """log of mean(exp(beta * values)) over ``mask``, shifted by the max.

    The mean is taken over *all* entries (masked ones count as zero), so
    ``depth*log 2 + log_mean_exp`` is a log partition function.
    """
    if mask is not None:
        if not mask.any():
            return LOG_ZERO
        top = float(values[mask].max())
        terms = np.where(mask, np.exp(beta * (values - top)), 0.0)
    else:
        top = float(values.max())
        terms = np.exp(beta * (values - top))
    shift = beta * top if beta != 0.0 else 0.0
    return shift + math.log(terms.mean())


def log_partition(sample: TreeSample, beta: float) -> float:
    """log sum over leaves of exp(beta * X_u)."""
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    return sample.depth * LOG2 + log_mean_exp(sample.leaves, beta)


def log_expected_partition(profile: CovarianceProfile, N: int, k: int, beta: float) -> float:
    """(N-k) log 2 + beta^2 N (1 - A(k/N)) / 2."""
    if N < 1 or not 0 <= k <= N:
        raise DomainError(f"need 0 <= k <= N, got N={N}, k={k}")
    return (N - k) * LOG2 + 0.5 * beta * beta * N * (1.0 - eval_A(profile, k / N))


def barrier_levels(profile: CovarianceProfile, N: int, k: int, beta: float, barrier: BarrierParams) -> np.ndarray:
    """Thresholds beta*N*(A((n+k)/N)-A(k/N)) + a n + b for n = 1..N-k."""
    n = np.arange(1, N - k + 1)
    return beta * cumulative_variances(profile, N, k) + barrier.a * n + barrier.b


def survivors(sample: TreeSample, upper: np.ndarray) -> np.ndarray:
    """Leaf mask of paths staying below ``upper`` at every depth.

    Level-by-level propagation: a node survives iff its parent does and its
    own value is below the threshold, so each node is visited once.
    """
    if not sample.has_internal_nodes:
        raise MissingInternalNodes("truncation needs the values of all internal nodes")
    alive = sample.level(1) <= upper[0]
    for d in range(2, sample.depth + 1):
        alive = np.repeat(alive, 2) & (sample.level(d) <= upper[d - 1])
    return alive


def log_truncated_partition(sample: TreeSample, beta: float, barrier: BarrierParams) -> float:
    """log of the partition sum restricted to leaves whose path respects the barrier."""
    upper = barrier_levels(sample.profile, sample.N, sample.offset, beta, barrier)
    alive = survivors(sample, upper)
    return sample.depth * LOG2 + log_mean_exp(sample.leaves, beta, alive)


def one_step_residual(sample: TreeSample, beta: float) -> float:
    """|log Z - log sum_{|u|=1} e^{beta X_u} Z^u| on one realisation."""
    if not sample.has_internal_nodes:
        raise MissingInternalNodes("one-step decomposition needs the first level")
    whole = log_partition(sample, beta)
    first = sample.level(1)
    leaves = sample.leaves
    half = leaves.size // 2
    parts = []
    for i, xu in enumerate(first):
        if sample.depth == 1:
            log_sub = 0.0
        else:
            below = leaves[i * half : (i + 1) * half] - xu
            log_sub = (sample.depth - 1) * LOG2 + log_mean_exp(below, beta)
        parts.append(beta * xu + log_sub)
    return abs(whole - float(np.logaddexp(parts[0], parts[1])))

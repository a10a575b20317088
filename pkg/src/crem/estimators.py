"""Monte Carlo estimators for the normalised partition function W = Z / E[Z].

Each ``*_grid`` function samples one batch of trees and evaluates every
(beta, s) or (beta, epsilon) point on it, so a whole grid costs one tree
per replicate.  Replicate r of seed S is always the same tree.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import beta as beta_dist

from .bounds import log_one_step_constant
from .errors import DomainError
from .montecarlo import mean_and_stderr, tree_batch
from .oracles import log_one_step_moment, one_step_neg_moment
from .partition import log_expected_partition
from .profile import CovarianceProfile, increment_variance
from .rng import derive_seed, normals
from .sampler import MAX_DEPTH, _check_depth

HEAVY_TAIL_SHARE = 0.1
TAIL_LEVEL = 0.05


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    reps: int
    seed: int
    profile_hash: str
    N: int
    k: int
    beta: float
    param: float  # s for moments, epsilon for tails, nan otherwise
    warn: str = ""
    upper: float | None = None  # one-sided 95% bound for tail probabilities

    def to_dict(self) -> dict:
        return asdict(self)


def _check_reps(reps, minimum=2):
    if reps < minimum:
        raise DomainError(f"need at least {minimum} replicates, got {reps}")


def _heavy_tail(vals: np.ndarray) -> str:
    total = vals.sum()
    if total > 0 and vals.max() > HEAVY_TAIL_SHARE * total:
        return "heavy-tail"
    return ""


def _estimate(vals, reps, seed, profile, N, k, beta, param, warn="", upper=None):
    m, se = mean_and_stderr(vals)
    return MomentEstimate(m, se, reps, int(seed), profile.digest(), N, k, float(beta), float(param), warn, upper)


def neg_moment_grid(
    profile: CovarianceProfile, N: int, betas, ss, reps: int, seed: int, threads: int | None = None
) -> dict[tuple[float, float], MomentEstimate]:
    """E[W^{-s}] for every (beta, s), all from the same ``reps`` trees."""
    _check_reps(reps, 100)
    _check_depth(N, 0, MAX_DEPTH)
    betas = [float(b) for b in betas]
    batch = tree_batch(profile, N, 0, seed, reps, betas=betas, threads=threads)
    out = {}
    for j, b in enumerate(betas):
        log_w = batch.log_z[:, j] - log_expected_partition(profile, N, 0, b)
        for s in ss:
            if s <= 0:
                raise DomainError("s must be positive")
            vals = np.exp(-float(s) * log_w)
            out[(b, float(s))] = _estimate(vals, reps, seed, profile, N, 0, b, s, _heavy_tail(vals))
    return out


def estimate_neg_moment(profile, N, beta, s, reps, seed, threads=None) -> MomentEstimate:
    """Mean of W^{-s} over independent trees."""
    return neg_moment_grid(profile, N, [beta], [s], reps, seed, threads)[(float(beta), float(s))]


def clopper_pearson_upper(hits: int, n: int, level: float = TAIL_LEVEL) -> float:
    """One-sided upper confidence bound for a binomial proportion."""
    if hits >= n:
        return 1.0
    return float(beta_dist.ppf(1.0 - level, hits + 1, n - hits))


def left_tail_grid(
    profile: CovarianceProfile, N: int, k: int, betas, epsilons, reps: int, seed: int, threads: int | None = None
) -> dict[tuple[float, float], MomentEstimate]:
    """P(Z^{(k)} <= eps E[Z^{(k)}]) for every (beta, eps) on shared trees."""
    _check_reps(reps)
    _check_depth(N, k, MAX_DEPTH)
    betas = [float(b) for b in betas]
    batch = tree_batch(profile, N, k, seed, reps, betas=betas, threads=threads)
    out = {}
    for j, b in enumerate(betas):
        log_w = batch.log_z[:, j] - log_expected_partition(profile, N, k, b)
        for eps in epsilons:
            if not 0 < eps < 1:
                raise DomainError(f"epsilon must lie in (0, 1), got {eps}")
            hits = (log_w <= math.log(eps)).astype(float)
            n_hit = int(hits.sum())
            out[(b, float(eps))] = _estimate(
                hits, reps, seed, profile, N, k, b, eps,
                "no-hits" if n_hit == 0 else "", clopper_pearson_upper(n_hit, reps),
            )
    return out


def estimate_left_tail(profile, N, k, beta, epsilon, reps, seed, threads=None) -> MomentEstimate:
    return left_tail_grid(profile, N, k, [beta], [epsilon], reps, seed, threads)[(float(beta), float(epsilon))]


def free_energy_grid(profile, N, betas, reps, seed, threads=None) -> dict[float, MomentEstimate]:
    """(1/N) log Z averaged over trees, for each beta."""
    _check_reps(reps)
    _check_depth(N, 0, MAX_DEPTH)
    betas = [float(b) for b in betas]
    batch = tree_batch(profile, N, 0, seed, reps, betas=betas, threads=threads)
    out = {}
    for j, b in enumerate(betas):
        # split off the deterministic log 2 per level so that beta = 0 is exact
        vals = (batch.log_z[:, j] - N * math.log(2.0)) / N + math.log(2.0)
        out[b] = _estimate(vals, reps, seed, profile, N, 0, b, math.nan)
    return out


def estimate_free_energy(profile, N, beta, reps, seed, threads=None) -> MomentEstimate:
    return free_energy_grid(profile, N, [beta], reps, seed, threads)[float(beta)]


def estimate_max(profile, N, reps, seed, threads=None) -> MomentEstimate:
    """(1/N) max_u X_u averaged over trees."""
    _check_reps(reps)
    _check_depth(N, 0, MAX_DEPTH)
    batch = tree_batch(profile, N, 0, seed, reps, threads=threads)
    return _estimate(batch.max_leaf / N, reps, seed, profile, N, 0, math.nan, math.nan)


@dataclass(frozen=True)
class BootstrapReport:
    p_lhs: float
    se_lhs: float
    p_next: float
    se_next: float
    p_step: float
    se_step: float
    p_step_exact: float
    rhs: float
    se_rhs: float
    holds: bool
    markov_s: float
    markov_bound: float  # E[M^{-s}] delta^s, exact one-step moment
    markov_bound_uniform: float  # same with the uniform one-step constant
    markov_holds: bool


def bootstrap_inequality_check(
    profile: CovarianceProfile,
    N: int,
    k: int,
    beta: float,
    c_val: float,
    delta: float,
    reps: int,
    seed: int,
    s: float = 10.0,
    threads: int | None = None,
) -> BootstrapReport:
    """P(Z^{(k)} <= c delta E Z^{(k)}) against (P(Z^{(k+1)} <= c E Z^{(k+1)}) + P(M^{(k)} <= delta))^2."""
    if not 0 <= k <= N - 1:
        raise DomainError(f"need 0 <= k <= N-1, got N={N}, k={k}")
    if c_val <= 0 or delta <= 0:
        raise DomainError("c and delta must be positive")
    _check_reps(reps)

    def tail(kk, level, sub):
        if kk == N:  # empty subtree: Z = E[Z] = 1
            return float(1.0 <= level), 0.0
        batch = tree_batch(profile, N, kk, derive_seed(seed, sub), reps, betas=(beta,), threads=threads)
        log_w = batch.log_z[:, 0] - log_expected_partition(profile, N, kk, beta)
        return mean_and_stderr((log_w <= math.log(level)).astype(float))

    p0, se0 = tail(k, c_val * delta, 1)
    p1, se1 = tail(k + 1, c_val, 2)

    sd = math.sqrt(increment_variance(profile, N, k, 1))
    x = sd * normals(derive_seed(seed, 3), 0, reps)
    log_m = beta * x - log_one_step_moment(profile, N, k, beta)
    p2, se2 = mean_and_stderr((log_m <= math.log(delta)).astype(float))
    if beta > 0:
        exact = float(ndtr((math.log(delta) + log_one_step_moment(profile, N, k, beta)) / (beta * sd)))
    else:
        exact = float(-math.log(2.0) <= math.log(delta))

    rhs = (p1 + p2) ** 2
    se_rhs = 2.0 * (p1 + p2) * math.hypot(se1, se2)
    holds = p0 - rhs <= 3.0 * math.hypot(se0, se_rhs)
    bound = one_step_neg_moment(profile, N, k, beta, s) * delta**s
    uniform = math.exp(log_one_step_constant(profile, beta, s) + s * math.log(delta))
    markov_holds = p2 - bound <= 3.0 * se2
    return BootstrapReport(p0, se0, p1, se1, p2, se2, exact, rhs, se_rhs, bool(holds), s, bound, uniform, bool(markov_holds))


def estimate_truncated_ratio(profile, N, k, beta, barrier, reps, seed, threads=None) -> MomentEstimate:
    """Mean of Z^{(k),<=} / E[Z^{(k)}] over trees."""
    _check_reps(reps)
    _check_depth(N, k, MAX_DEPTH)
    batch = tree_batch(profile, N, k, seed, reps, betas=(beta,), barriers=[barrier], threads=threads)
    vals = np.exp(batch.log_z_trunc[:, 0] - log_expected_partition(profile, N, k, beta))
    return _estimate(vals, reps, seed, profile, N, k, beta, math.nan, _heavy_tail(vals))

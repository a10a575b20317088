"""Second computation paths for the moment identities of the tree.

Walk expectations are evaluated either by nested Gauss-Legendre quadrature
(at most four steps) or by Monte Carlo of the exponentially tilted walk,
where the weight e^{beta S} becomes a closed-form factor times a barrier
probability.  The tree-side counterpart is ``brute_force_tree_moment``.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numba as nb
import numpy as np
from scipy.special import ndtr

from .errors import DomainError, QuadratureOrderExceeded
from .montecarlo import Estimate, mean_and_stderr, replicate_map, tree_batch
from .partition import BarrierParams, barrier_levels
from .profile import CovarianceProfile, cumulative_variances, increment_variance, increment_variances
from .rng import SECOND_BRANCH_NODE, derive_seed, node_normal
from .sampler import _check_depth

MAX_QUADRATURE_STEPS = 4
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
WINDOW = 10.0  # standard deviations kept on each side of a step's mode
INACTIVE_B = 1e9


# --- quadrature -------------------------------------------------------------


def _nested(start, sds, upper, tilt, terminal=None):
    """E[prod_l e^{tilt_l y_l} 1{start + S_l <= upper_l for all l} terminal(start + S_n)].

    ``start`` is a vector of initial states; the result has the same shape.
    With ``terminal=None`` and no tilt on the last step, that step is done
    analytically through the normal CDF.
    """
    if len(sds) == 0:
        return np.ones_like(start) if terminal is None else terminal(start)
    sd, room = sds[0], upper[0] - start
    if len(sds) == 1 and terminal is None and tilt[0] == 0.0:
        return ndtr(room / sd)
    mode = tilt[0] * sd * sd
    hi = np.minimum(mode + WINDOW * sd, room)
    lo = np.minimum(mode, room) - WINDOW * sd
    half = 0.5 * (hi - lo)
    y = (0.5 * (hi + lo))[:, None] + half[:, None] * GL_NODES[None, :]
    dens = np.exp(tilt[0] * y - 0.5 * (y / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
    w = half[:, None] * GL_WEIGHTS[None, :] * dens
    nxt = (start[:, None] + y).ravel()
    inner = _nested(nxt, sds[1:], upper[1:], tilt[1:], terminal).reshape(y.shape)
    return (w * inner).sum(axis=1)


def _check_quadrature(n):
    if n > MAX_QUADRATURE_STEPS:
        raise QuadratureOrderExceeded(f"quadrature handles at most {MAX_QUADRATURE_STEPS} steps, got {n}")


def barrier_probability(variances, upper) -> float:
    """P(S_l <= upper_l for all l) for a centred Gaussian walk, by quadrature."""
    sds = np.sqrt(np.asarray(variances, dtype=float))
    _check_quadrature(sds.size)
    upper = np.asarray(upper, dtype=float)
    return float(_nested(np.zeros(1), sds, upper, np.zeros(sds.size))[0])


def direct_expectation(variances, g, beta: float) -> float:
    """E[e^{beta S_n} 1{S_l <= g(l) for all l}] integrated as written, no tilting."""
    sds, upper = _walk_inputs(variances, g)
    _check_quadrature(sds.size)
    tilt = np.full(sds.size, float(beta))
    return float(_nested(np.zeros(1), sds, upper, tilt, terminal=np.ones_like)[0])


# --- Monte Carlo kernels ----------------------------------------------------


@nb.njit(nogil=True)
def _walk_hits(keys, sds, shift, upper, out):
    # 1 if the walk plus ``shift`` stays at or below ``upper`` at every step
    for r in range(keys.size):
        key = keys[r]
        s = 0.0
        ok = 1.0
        for n in range(sds.size):
            s += sds[n] * node_normal(key, np.uint64(n))
            if s + shift[n] > upper[n]:
                ok = 0.0
                break
        out[r] = ok


@nb.njit(nogil=True)
def _pair_hits(keys, sds, split, shift, upper, out):
    # both branches of a pair sharing ``split`` steps stay below the barrier
    m = sds.size
    for r in range(keys.size):
        key = keys[r]
        s = 0.0
        ok = 1.0
        for n in range(m):
            s += sds[n] * node_normal(key, np.uint64(n))
            if s + shift[n] > upper[n]:
                ok = 0.0
                break
        if ok == 1.0:
            t = 0.0
            for n in range(split):
                t += sds[n] * node_normal(key, np.uint64(n))
            for n in range(split, m):
                t += sds[n] * node_normal(key, np.uint64(SECOND_BRANCH_NODE + n))
                if t + shift[n] > upper[n]:
                    ok = 0.0
                    break
        out[r] = ok


def _walk_inputs(variances, g):
    var = np.asarray(variances, dtype=float)
    if var.ndim != 1 or var.size == 0:
        raise DomainError("need a nonempty list of step variances")
    if np.any(var <= 0.0):
        raise DomainError("step variances must be positive")
    steps = np.arange(1, var.size + 1)
    if callable(g):
        upper = np.array([float(g(int(l))) for l in steps])
    else:
        upper = np.broadcast_to(np.asarray(g, dtype=float), var.shape).copy()
    return np.sqrt(var), upper


def _probability(sds, upper, method, reps, seed, threads):
    if method == "quadrature":
        _check_quadrature(sds.size)
        return Estimate(float(_nested(np.zeros(1), sds, upper, np.zeros(sds.size))[0]), 0.0, 0)
    if method != "montecarlo":
        raise DomainError(f"unknown method {method!r}")
    hits = replicate_map(_walk_hits, (sds, np.zeros(sds.size), upper), reps, seed, threads)
    return Estimate(*mean_and_stderr(hits), reps)


def _pair_probability(sds, split, shift, upper, method, reps, seed, threads):
    if method == "quadrature":
        _check_quadrature(sds.size)
        zero = np.zeros(sds.size)
        cut = upper - shift

        def tail(state):
            return _nested(state, sds[split:], cut[split:], zero[split:]) ** 2

        return Estimate(float(_nested(np.zeros(1), sds[:split], cut[:split], zero[:split], tail)[0]), 0.0, 0)
    hits = replicate_map(_pair_hits, (sds, split, shift, upper), reps, seed, threads)
    return Estimate(*mean_and_stderr(hits), reps)


def _scaled(est: Estimate, log_factor: float, pow2: int = 0) -> Estimate:
    # powers of two go through ldexp so that counting identities stay exact
    f = math.ldexp(math.exp(log_factor), pow2)
    return Estimate(f * est.mean, f * est.stderr, est.reps)


# --- public oracles ---------------------------------------------------------


def tilting_expectation(
    variances: Sequence[float],
    g: Callable[[int], float] | Sequence[float],
    beta: float,
    method: str = "quadrature",
    reps: int = 100_000,
    seed: int = 0,
    threads: int | None = None,
) -> Estimate:
    """E[e^{beta S_n} 1{S_l <= g(l) for all l}] via the tilted walk.

    Equals exp(beta^2 V_n / 2) * P(S_l <= g(l) - beta V_l for all l), with
    V_l the cumulative variance; the probability comes from quadrature
    (n <= 4) or from Monte Carlo over ``reps`` walks.
    """
    sds, upper = _walk_inputs(variances, g)
    V = np.cumsum(sds * sds)
    p = _probability(sds, upper - beta * V, method, reps, seed, threads)
    return _scaled(p, 0.5 * beta * beta * V[-1])


def _barrier_or_inactive(barrier):
    return barrier if barrier is not None else BarrierParams(1.0, INACTIVE_B)


def many_to_one_expectation(
    profile: CovarianceProfile,
    N: int,
    k: int,
    beta: float,
    barrier: BarrierParams | None = None,
    method: str = "montecarlo",
    reps: int = 100_000,
    seed: int = 0,
    threads: int | None = None,
) -> Estimate:
    """E[Z^{(k),<=}] as 2^{N-k} times a single-walk expectation."""
    m = _check_depth(N, k, limit=10**9)
    barrier = _barrier_or_inactive(barrier)
    upper = barrier_levels(profile, N, k, beta, barrier)
    walk = tilting_expectation(increment_variances(profile, N, k), upper, beta, method, reps, seed, threads)
    return _scaled(walk, 0.0, m)


def many_to_two_terms(
    profile: CovarianceProfile,
    N: int,
    k: int,
    beta: float,
    barrier: BarrierParams | None = None,
    method: str = "montecarlo",
    reps: int = 100_000,
    seed: int = 0,
    threads: int | None = None,
) -> list[Estimate]:
    """The weighted terms of the pair decomposition of E[(Z^{(k),<=})^2].

    Entry 0 is the diagonal 2^m E[e^{2 beta S} 1_G]; entry l+1 is
    2^{2m-l-1} E[e^{beta(S + S~)} 1_{G and G~}] for walks splitting after l steps.
    """
    m = _check_depth(N, k, limit=10**9)
    barrier = _barrier_or_inactive(barrier)
    var = increment_variances(profile, N, k)
    sds = np.sqrt(var)
    V = cumulative_variances(profile, N, k)
    upper = barrier_levels(profile, N, k, beta, barrier)
    diag = _probability(sds, upper - 2.0 * beta * V, method, reps, derive_seed(seed, 0), threads)
    terms = [_scaled(diag, 2.0 * beta * beta * V[-1], m)]
    for split in range(m):
        Vl = V[split - 1] if split > 0 else 0.0
        steps = np.arange(m)
        shift = np.where(steps < split, 2.0 * beta * V, beta * (V + Vl))
        p = _pair_probability(sds, split, shift, upper, method, reps, derive_seed(seed, split + 1), threads)
        log_norm = 2.0 * beta * beta * Vl + beta * beta * (V[-1] - Vl)
        terms.append(_scaled(p, log_norm, 2 * m - split - 1))
    return terms


def many_to_two_expectation(*args, **kwargs) -> Estimate:
    """E[(Z^{(k),<=})^2] summed over pair types; independent streams per term."""
    terms = many_to_two_terms(*args, **kwargs)
    mean = math.fsum(t.mean for t in terms)
    se = math.sqrt(math.fsum(t.stderr**2 for t in terms))
    return Estimate(mean, se, terms[0].reps)


def brute_force_tree_moment(
    profile: CovarianceProfile,
    N: int,
    k: int,
    beta: float,
    barrier: BarrierParams | None = None,
    moment: int = 1,
    reps: int = 20_000,
    seed: int = 0,
    threads: int | None = None,
) -> Estimate:
    """Mean of (Z^{(k),<=})^moment over full tree samples (depth at most 12)."""
    if moment not in (1, 2):
        raise DomainError("moment must be 1 or 2")
    depth = _check_depth(N, k, limit=12)
    bars = None if barrier is None else [barrier]
    batch = tree_batch(profile, N, k, seed, reps, betas=(beta,), barriers=bars, threads=threads, limit=12)
    logs = (batch.log_z if barrier is None else batch.log_z_trunc)[:, 0]
    # keep the power of two out of exp so that beta = 0 is exact
    vals = np.ldexp(np.exp(moment * (logs - depth * math.log(2.0))), moment * depth)
    return Estimate(*mean_and_stderr(vals), reps)


def one_step_neg_moment(profile: CovarianceProfile, N: int, k: int, beta: float, s: float) -> float:
    """E[M^{-s}] for M = e^{beta X_1} / E[Z^{(k)}_1], in closed form."""
    if s <= 0:
        raise DomainError("s must be positive")
    if not 0 <= k <= N - 1:
        raise DomainError(f"need 0 <= k <= N-1, got N={N}, k={k}")
    var = increment_variance(profile, N, k, 1)
    return math.exp(0.5 * beta * beta * s * s * var + s * math.log(2.0) + 0.5 * beta * beta * s * var)


def log_one_step_moment(profile: CovarianceProfile, N: int, k: int, beta: float) -> float:
    """log E[Z^{(k)}_1] = log 2 + beta^2 sigma_1^2 / 2."""
    return math.log(2.0) + 0.5 * beta * beta * increment_variance(profile, N, k, 1)


@nb.njit(nogil=True)
def _one_step_draws(keys, sd, beta, log_norm, s, out):
    for r in range(keys.size):
        x = sd * node_normal(keys[r], np.uint64(0))
        out[r] = math.exp(-s * (beta * x - log_norm))


def one_step_neg_moment_mc(
    profile: CovarianceProfile, N: int, k: int, beta: float, s: float, reps: int = 100_000, seed: int = 0, threads=None
) -> Estimate:
    """Monte Carlo of E[M^{-s}] from draws of the first-step increment."""
    if not 0 <= k <= N - 1:
        raise DomainError(f"need 0 <= k <= N-1, got N={N}, k={k}")
    sd = math.sqrt(increment_variance(profile, N, k, 1))
    vals = replicate_map(_one_step_draws, (sd, float(beta), log_one_step_moment(profile, N, k, beta), float(s)), reps, seed, threads)
    return Estimate(*mean_and_stderr(vals), reps)

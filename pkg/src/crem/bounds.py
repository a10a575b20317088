"""Explicit constants and sequences of the negative-moment argument.

Everything that can overflow (the second-moment constant, the one-step
constant, the bootstrap sequences) is carried as a natural logarithm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import DegenerateEta, DomainError, GammaOutOfRange, NotPositive, Supercritical
from .partition import BarrierParams, log_expected_partition
from .profile import LOG2, CovarianceProfile, beta_c, concave_hull

GAMMA_MIN, GAMMA_MAX = 1.1, 2.0


def _slope0(profile) -> float:
    return concave_hull(profile).slope0


def recommended_ab(profile: CovarianceProfile, beta: float) -> BarrierParams:
    """Barrier slope and offset used to prove the first/second moment estimates."""
    s0 = _slope0(profile)
    if beta <= 0:
        raise DomainError("beta must be positive")
    if beta >= beta_c(profile):
        raise Supercritical(f"beta={beta} is not below beta_c={beta_c(profile):.6f}")
    a = (LOG2 - 0.5 * beta * beta * s0) / (2.0 * beta)
    q = math.exp(-a * a / (2.0 * s0))
    # log(10 max{q/(1-q), 1}) without forming q/(1-q) when q ~ 1
    log_ratio = math.log(q) - math.log(-math.expm1(-a * a / (2.0 * s0)))
    b = (s0 / a) * (math.log(10.0) + max(log_ratio, 0.0))
    return BarrierParams(a, b)


def small_c(profile: CovarianceProfile, beta: float, a: float) -> float:
    """Exponential rate log 2 - beta^2 A'(0)/2 - beta a of the pair sum."""
    c = LOG2 - 0.5 * beta * beta * _slope0(profile) - beta * a
    if not c > 0:
        raise NotPositive(f"c = {c:.6g} is not positive for beta={beta}, a={a}")
    return c


def schedule(N: int, gamma: float) -> tuple[int, int]:
    """K = floor(2 log N / log gamma) and K1 = K^2."""
    if not GAMMA_MIN < gamma < GAMMA_MAX:
        raise GammaOutOfRange(f"gamma must lie in ({GAMMA_MIN}, {GAMMA_MAX}), got {gamma}")
    if N < 2:
        raise DomainError("schedule needs N >= 2")
    K = int(math.floor(2.0 * math.log(N) / math.log(gamma) + 1e-12))
    return K, K * K


def hN_LN(profile: CovarianceProfile, N: int, gamma: float, c: float) -> tuple[float, float]:
    K, K1 = schedule(N, gamma)
    alpha, CH = profile.holder_alpha, profile.holder_C
    h = CH * (1.0 + 2.0**alpha) * K ** (1.0 + alpha) / N
    L = c * K1 - _slope0(profile) * K
    return h, L


def second_moment_constant(beta: float, b: float, c: float) -> float:
    """log C for C = e^{1+beta b}/(1-e^{-c}) + e^{-1+beta b} e^{-c}/(1-e^{-c})."""
    if not c > 0:
        raise NotPositive(f"c must be positive, got {c}")
    return beta * b + np.logaddexp(1.0, -1.0 - c) - math.log(-math.expm1(-c))


def log_eta0_from_log_C(log_C: float) -> float:
    """log eta0 for eta0 = 1 - 4/(100 C), accurate even when C is astronomically large."""
    if log_C < 0:
        raise DomainError("C must be at least 1")
    return math.log1p(-0.04 * math.exp(-log_C))


def eta0_from_C(C: float) -> float:
    if not C >= 1:
        raise DomainError(f"C must be at least 1, got {C}")
    eta = 1.0 - 4.0 / (100.0 * C)
    if eta >= 1.0:
        warnings.warn("eta0 rounds to 1: the left-tail bound is degenerate", RuntimeWarning, stacklevel=2)
    return eta


def log_one_step_constant(profile: CovarianceProfile, beta: float, s: float) -> float:
    """log of the uniform bound exp(b^2 s^2 (A'(0)+1)/2) 2^s exp(b^2 s (A'(0)+1)/2) on E[M^{-s}]."""
    v = _slope0(profile) + 1.0
    return 0.5 * beta * beta * s * s * v + s * LOG2 + 0.5 * beta * beta * s * v


def _check_sequence_inputs(log_eta0, gamma, log_C, s, K):
    if not log_eta0 < 0:
        raise DegenerateEta("eta0 must be strictly below 1")
    if not GAMMA_MIN < gamma < GAMMA_MAX:
        raise GammaOutOfRange(f"gamma must lie in ({GAMMA_MIN}, {GAMMA_MAX}), got {gamma}")
    if log_C < 0:
        raise DomainError("the one-step constant must be at least 1")
    if s <= 0:
        raise DomainError("s must be positive")
    if K < 0:
        raise DomainError("K must be nonnegative")


def _log_gap(log_eta, gamma):
    # log(eta^{gamma/2} - eta) = (gamma/2) log eta + log(1 - eta^{1 - gamma/2})
    return 0.5 * gamma * log_eta + np.log(-np.expm1((1.0 - 0.5 * gamma) * log_eta))


@dataclass(frozen=True)
class Sequences:
    log_eps: np.ndarray
    log_eta: np.ndarray

    @property
    def eps(self) -> np.ndarray:
        return np.exp(self.log_eps)

    @property
    def eta(self) -> np.ndarray:
        return np.exp(self.log_eta)


def bootstrap_sequences(eta0=None, gamma=1.5, C_onestep=1.0, s=1.0, K=10, *, log_eta0=None, log_C=None) -> Sequences:
    """eta_k = eta0^{gamma^k} and eps_{k+1} = eps_k ((eta_k^{gamma/2} - eta_k)/C)^{1/(10 s)}, eps_0 = 1/2.

    Built by the recursion; ``eps_by_product`` evaluates the closed product.
    Either the plain values or their logarithms may be given.
    """
    if log_eta0 is None:
        if eta0 is None or not 0 < eta0:
            raise DegenerateEta(f"eta0 must lie in (0, 1), got {eta0}")
        if eta0 >= 1:
            raise DegenerateEta(f"eta0 must lie in (0, 1), got {eta0}")
        log_eta0 = math.log(eta0)
    if log_C is None:
        if not C_onestep >= 1:
            raise DomainError(f"the one-step constant must be at least 1, got {C_onestep}")
        log_C = math.log(C_onestep)
    _check_sequence_inputs(log_eta0, gamma, log_C, s, K)
    log_eta = log_eta0 * gamma ** np.arange(K + 1, dtype=float)
    log_eps = np.empty(K + 1)
    log_eps[0] = -LOG2
    for k in range(K):
        log_eps[k + 1] = log_eps[k] + (_log_gap(log_eta[k], gamma) - log_C) / (10.0 * s)
    return Sequences(log_eps, log_eta)


def eps_by_product(eta0: float, gamma: float, C_onestep: float, s: float, K: int) -> np.ndarray:
    """eps_k = (1/2) prod_{n<k} ((eta_n^{gamma/2} - eta_n)/C)^{1/(10 s)} in plain floating point."""
    eta = eta0 ** (gamma ** np.arange(K, dtype=float))
    factors = ((eta ** (gamma / 2.0) - eta) / C_onestep) ** (1.0 / (10.0 * s))
    return 0.5 * np.concatenate(([1.0], np.cumprod(factors)))


@dataclass(frozen=True)
class SummabilityReport:
    log_terms: np.ndarray  # log(eps_{k+1}^{-s} eta_k), k = 0..K-1
    log_partial: np.ndarray
    decay_from: int | None  # first index after which terms decrease strictly
    tail_ratio: float  # last increment over first increment

    @property
    def terms(self) -> np.ndarray:
        return np.exp(self.log_terms)

    @property
    def partial_sums(self) -> np.ndarray:
        return np.exp(self.log_partial)

    @property
    def cauchy(self) -> bool:
        return self.tail_ratio < 1e-8


def summability_check(seq: Sequences, s: float) -> SummabilityReport:
    """Partial sums of eps_{k+1}^{-s} eta_k, k = 0..K-1."""
    log_terms = -s * seq.log_eps[1:] + seq.log_eta[:-1]
    log_partial = np.logaddexp.accumulate(log_terms) if log_terms.size else log_terms
    down = np.diff(log_terms) < 0
    decay_from = None
    for i in range(down.size):
        if down[i:].all():
            decay_from = i
            break
    ratio = float(np.exp(log_terms[-1] - log_terms[0])) if log_terms.size else math.nan
    return SummabilityReport(log_terms, log_partial, decay_from, ratio)


def gaussian_tail(r: float) -> tuple[float, float]:
    """(integral of e^{-y^2/2} over [r, inf), e^{-r^2/2}/r)."""
    if not r > 0:
        raise DomainError("r must be positive")
    return math.sqrt(math.pi / 2.0) * float(erfc(r / math.sqrt(2.0))), math.exp(-0.5 * r * r) / r


def rN(profile: CovarianceProfile, N: int, beta: float, s: float, log_eps_K: float) -> float:
    """Lower integration limit left after bounding Z by a single particle."""
    if log_eps_K > 0:
        raise DomainError("eps_K must lie in (0, 1]")
    return -(log_eps_K + log_expected_partition(profile, N, 0, beta) + N * beta * s) / (beta * math.sqrt(N))


@dataclass
class BoundLedger:
    beta: float
    s: float
    gamma: float
    N: int
    K: int
    K1: int
    a: float
    b: float
    c: float
    hN: float
    LN: float
    log_C_second: float
    log_eta0: float
    eta0: float
    log_C_onestep: float
    log_eps: list[float]
    log_eta: list[float]
    rN: float
    rN_nonnegative: bool
    empirical_eta0: float | None = None
    empirical_eta0_stderr: float | None = None
    empirical: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: _json_safe(v) for k, v in asdict(self).items()}


def _json_safe(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else str(v)
    if isinstance(v, list):
        return [_json_safe(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    return v


def bound_ledger(profile: CovarianceProfile, beta: float, s: float, N: int, gamma: float) -> BoundLedger:
    """Every constant of the argument for one (profile, beta, s, N, gamma)."""
    bar = recommended_ab(profile, beta)
    c = small_c(profile, beta, bar.a)
    K, K1 = schedule(N, gamma)
    h, L = hN_LN(profile, N, gamma, c)
    log_C2 = float(second_moment_constant(beta, bar.b, c))
    log_eta0 = log_eta0_from_log_C(log_C2)
    log_C1 = log_one_step_constant(profile, beta, 10.0 * s)
    seq = bootstrap_sequences(gamma=gamma, s=s, K=K, log_eta0=log_eta0, log_C=log_C1)
    r = rN(profile, N, beta, s, float(seq.log_eps[-1]))
    return BoundLedger(
        beta=beta, s=s, gamma=gamma, N=N, K=K, K1=K1, a=bar.a, b=bar.b, c=c, hN=h, LN=L,
        log_C_second=log_C2, log_eta0=log_eta0, eta0=math.exp(log_eta0), log_C_onestep=log_C1,
        log_eps=[float(x) for x in seq.log_eps], log_eta=[float(x) for x in seq.log_eta],
        rN=r, rN_nonnegative=bool(r >= 0),
    )

"""Covariance profiles A, their concave hulls and the closed forms derived from them.

A profile is a piecewise-linear, nondecreasing map A: [0, 1] -> [0, 1] with
A(0) = 0 and A(1) = 1.  The field on the depth-N binary tree has covariance
E[X_u X_v] = N * A(|u ^ v| / N).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    BoundViolated,
    DegenerateProfile,
    DomainError,
    EndpointViolation,
    MonotonicityViolation,
    NonlinearNearZero,
    ProfileError,
)

TOL = 1e-12
LOG2 = math.log(2.0)
SQRT_2LOG2 = math.sqrt(2.0 * LOG2)


@dataclass(frozen=True)
class CovarianceProfile:
    knots: tuple[tuple[float, float], ...]
    holder_alpha: float
    holder_C: float
    x1: float
    xs: np.ndarray = field(init=False, repr=False, compare=False)
    values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        xs = np.array([k[0] for k in self.knots], dtype=float)
        vs = np.array([k[1] for k in self.knots], dtype=float)
        xs.setflags(write=False)
        vs.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", vs)

    def __call__(self, x):
        return eval_A(self, x)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.xs)

    def to_dict(self) -> dict:
        return {
            "knots": [[x, a] for x, a in self.knots],
            "holder_alpha": self.holder_alpha,
            "holder_C": self.holder_C,
            "x1": self.x1,
        }

    def digest(self) -> str:
        """Short content hash used to tag estimator output."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ConcaveHull:
    """Least concave majorant of a piecewise-linear profile."""

    knots: tuple[tuple[float, float], ...]
    slopes: tuple[float, ...]

    @property
    def slope0(self) -> float:
        """Right derivative of the hull at 0."""
        return self.slopes[0]

    @property
    def lengths(self) -> np.ndarray:
        xs = np.array([k[0] for k in self.knots])
        return np.diff(xs)

    def eval(self, x):
        xs = np.array([k[0] for k in self.knots])
        vs = np.array([k[1] for k in self.knots])
        return np.interp(x, xs, vs)


def validate_profile(knots, holder_alpha=0.5, holder_C=0.0, x1=1.0) -> CovarianceProfile:
    knots = [(float(x), float(a)) for x, a in knots]
    if not knots:
        raise ProfileError("profile needs at least one knot")
    if not 0.0 < holder_alpha < 1.0:
        raise ProfileError(f"holder_alpha must lie in (0, 1), got {holder_alpha}")
    if holder_C < 0.0:
        raise ProfileError(f"holder_C must be nonnegative, got {holder_C}")
    if not 0.0 < x1 <= 1.0 + TOL:
        raise ProfileError(f"x1 must lie in (0, 1], got {x1}")

    for (xa, aa), (xb, ab) in zip(knots, knots[1:]):
        if not xb > xa:
            raise MonotonicityViolation(f"knot abscissae not strictly increasing at x={xb}")
        if ab < aa - TOL:
            raise MonotonicityViolation(f"A decreases between x={xa} and x={xb}")
    (x0, a0), (xn, an) = knots[0], knots[-1]
    if abs(x0) > TOL or abs(a0) > TOL:
        raise EndpointViolation(f"first knot must be (0, 0), got {knots[0]}")
    if abs(xn - 1.0) > TOL or abs(an - 1.0) > TOL:
        raise EndpointViolation(f"last knot must be (1, 1), got {knots[-1]}")

    # every segment meeting (0, x1) must carry the slope of the first one
    xs = np.array([k[0] for k in knots])
    slopes = np.diff([k[1] for k in knots]) / np.diff(xs)
    near = xs[:-1] < x1 - TOL
    if np.any(np.abs(slopes[near] - slopes[0]) > 1e-9):
        raise NonlinearNearZero(f"profile has more than one linear piece on [0, {x1}]")

    return CovarianceProfile(tuple(knots), float(holder_alpha), float(holder_C), float(x1))


def profile_from_dict(doc: dict) -> CovarianceProfile:
    try:
        return validate_profile(
            doc["knots"],
            holder_alpha=doc.get("holder_alpha", 0.5),
            holder_C=doc.get("holder_C", 0.0),
            x1=doc.get("x1", 1.0),
        )
    except KeyError as exc:
        raise ProfileError(f"profile document lacks field {exc}") from None


BUILTIN_PROFILES = ("lin", "pw1", "pw2")


def load_profile(source) -> CovarianceProfile:
    """Load a profile from a JSON path or one of the builtin names lin/pw1/pw2."""
    if isinstance(source, CovarianceProfile):
        return source
    name = str(source)
    if name.lower() in BUILTIN_PROFILES:
        text = resources.files("crem").joinpath(f"data/profiles/{name.lower()}.json").read_text()
    else:
        text = Path(name).read_text()
    return profile_from_dict(json.loads(text))


def builtin_profile(name: str) -> CovarianceProfile:
    return load_profile(name)


def eval_A(profile: CovarianceProfile, x):
    xa = np.asarray(x, dtype=float)
    if np.any(xa < -TOL) or np.any(xa > 1.0 + TOL):
        raise DomainError(f"A is defined on [0, 1], got {x}")
    out = np.interp(np.clip(xa, 0.0, 1.0), profile.xs, profile.values)
    return float(out) if out.ndim == 0 else out


def increment_variance(profile: CovarianceProfile, N: int, k: int, n: int) -> float:
    """Variance N*(A((n+k)/N) - A((n+k-1)/N)) of the n-th step below depth k."""
    if N < 1 or k < 0 or not 1 <= n <= N - k:
        raise DomainError(f"need N>=1, k>=0, 1<=n<=N-k; got N={N}, k={k}, n={n}")
    return N * (eval_A(profile, (n + k) / N) - eval_A(profile, (n + k - 1) / N))


def increment_variances(profile: CovarianceProfile, N: int, k: int) -> np.ndarray:
    """All N-k step variances of the subtree process at offset k."""
    if N < 1 or not 0 <= k <= N:
        raise DomainError(f"need N>=1 and 0<=k<=N; got N={N}, k={k}")
    grid = eval_A(profile, np.arange(k, N + 1) / N)
    return np.maximum(N * np.diff(np.atleast_1d(grid)), 0.0)


def cumulative_variances(profile: CovarianceProfile, N: int, k: int) -> np.ndarray:
    """V_n = N*(A((n+k)/N) - A(k/N)) for n = 1..N-k."""
    if N < 1 or not 0 <= k <= N:
        raise DomainError(f"need N>=1 and 0<=k<=N; got N={N}, k={k}")
    grid = np.atleast_1d(eval_A(profile, np.arange(k, N + 1) / N))
    return N * (grid[1:] - grid[0])


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def concave_hull(profile: CovarianceProfile) -> ConcaveHull:
    # upper half of Andrew's monotone chain; knots are already sorted in x
    upper: list[tuple[float, float]] = []
    for p in profile.knots:
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) >= -TOL:
            upper.pop()
        upper.append(p)
    slopes = tuple(
        (b[1] - a[1]) / (b[0] - a[0]) for a, b in zip(upper, upper[1:])
    )
    return ConcaveHull(tuple(upper), slopes)


def _as_hull(obj) -> ConcaveHull:
    return obj if isinstance(obj, ConcaveHull) else concave_hull(obj)


def beta_c(hull) -> float:
    """Static critical inverse temperature sqrt(2 log 2 / A_hat'(0))."""
    hull = _as_hull(hull)
    if hull.slope0 <= 0.0:
        raise DegenerateProfile("hull has zero slope at the origin")
    return SQRT_2LOG2 / math.sqrt(hull.slope0)


def f_branch(x: float) -> float:
    """x^2/2 + log 2 below sqrt(2 log 2), sqrt(2 log 2) * x above."""
    if x < SQRT_2LOG2:
        return 0.5 * x * x + LOG2
    return SQRT_2LOG2 * x


def free_energy(hull, beta: float) -> float:
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    hull = _as_hull(hull)
    total = 0.0
    for length, slope in zip(hull.lengths, hull.slopes):
        total += length * f_branch(beta * math.sqrt(max(slope, 0.0)))
    return float(total)


def max_growth_rate(hull) -> float:
    hull = _as_hull(hull)
    return SQRT_2LOG2 * float(
        sum(length * math.sqrt(max(s, 0.0)) for length, s in zip(hull.lengths, hull.slopes))
    )


@dataclass(frozen=True)
class NearZeroReport:
    worst_slack: float
    y: float
    z: float
    points: int


def near_zero_check(profile: CovarianceProfile, grid_step: float, slope0: float | None = None) -> NearZeroReport:
    """Check |A(y)-A(z)| <= s0|y-z| + C y^a |y-z| + C |y-z|^(1+a) on [0, x1]^2.

    ``slope0`` defaults to the hull slope at the origin; passing a smaller
    value lets callers confirm the check actually bites.
    """
    if grid_step <= 0:
        raise DomainError("grid_step must be positive")
    if slope0 is None:
        slope0 = concave_hull(profile).slope0
    m = int(math.floor(profile.x1 / grid_step + 1e-9))
    grid = np.minimum(np.arange(m + 1) * grid_step, profile.x1)
    y = grid[:, None]
    z = grid[None, :]
    gap = np.abs(y - z)
    lhs = np.abs(eval_A(profile, y) - eval_A(profile, z))
    C, a = profile.holder_C, profile.holder_alpha
    rhs = slope0 * gap + C * y**a * gap + C * gap ** (1.0 + a)
    slack = rhs - lhs
    i, j = np.unravel_index(np.argmin(slack), slack.shape)
    worst = float(slack[i, j])
    if worst < -TOL:
        raise BoundViolated(
            f"near-zero bound fails at y={grid[i]:.6g}, z={grid[j]:.6g} (slack {worst:.3e})",
            y=float(grid[i]),
            z=float(grid[j]),
        )
    return NearZeroReport(0.0 if abs(worst) <= TOL else worst, float(grid[i]), float(grid[j]), slack.size)

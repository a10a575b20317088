"""Cross-checks between independent computation paths, one row per case."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .bounds import recommended_ab
from .montecarlo import agree
from .oracles import (
    brute_force_tree_moment,
    direct_expectation,
    many_to_one_expectation,
    many_to_two_expectation,
    one_step_neg_moment,
    one_step_neg_moment_mc,
    tilting_expectation,
)
from .profile import CovarianceProfile, beta_c
from .rng import derive_seed

SUITES = ("tilting", "many-to-one", "many-to-two", "one-step")
TILTING_RTOL = 1e-6


@dataclass(frozen=True)
class CheckRow:
    suite: str
    case_id: str
    value_a: float
    se_a: float
    value_b: float
    se_b: float
    passed: bool

    @staticmethod
    def header() -> list[str]:
        return [f.name if f.name != "passed" else "pass" for f in fields(CheckRow)]

    def cells(self) -> list[str]:
        return [repr(v) if isinstance(v, float) else str(v) for v in astuple(self)]


def fuzz_tilting_cases(seed: int, count: int, max_steps: int = 3):
    """Random (variances, barrier, beta) triples with barrier probabilities of order one."""
    rng = np.random.default_rng(derive_seed(seed, 2))
    cases = []
    for _ in range(count):
        n = int(rng.integers(1, max_steps + 1))
        var = rng.uniform(0.2, 2.0, size=n)
        beta = float(rng.uniform(0.0, 1.5))
        V = np.cumsum(var)
        g = beta * V + np.sqrt(V) * rng.uniform(-1.5, 1.5, size=n)
        cases.append((var, g, beta))
    return cases


def tilting_suite(seed: int, count: int = 200) -> list[CheckRow]:
    """Untilted quadrature against the tilted closed-form-times-probability form."""
    rows = []
    for i, (var, g, beta) in enumerate(fuzz_tilting_cases(seed, count)):
        direct = direct_expectation(var, g, beta)
        tilted = tilting_expectation(var, g, beta, method="quadrature").mean
        ok = abs(direct - tilted) <= TILTING_RTOL * abs(tilted)
        rows.append(CheckRow("tilting", f"fuzz{i:03d}-n{len(var)}", direct, 0.0, tilted, 0.0, bool(ok)))
    return rows


def _beta_grid(profile, fractions):
    bc = beta_c(profile)
    return [(f, f * bc) for f in fractions]


def many_to_one_suite(
    profiles: dict[str, CovarianceProfile], Ns, ks, fractions, walk_reps, tree_reps, seed, threads=None
) -> list[CheckRow]:
    """Walk-form against tree-form E[Z^{(k),<=}] with the recommended barrier."""
    rows = []
    for pi, (name, prof) in enumerate(profiles.items()):
        for N in Ns:
            for k in ks:
                for fi, (frac, beta) in enumerate(_beta_grid(prof, fractions)):
                    bar = recommended_ab(prof, beta)
                    case_seed = derive_seed(seed, 3, pi, N, k, fi)
                    walk = many_to_one_expectation(prof, N, k, beta, bar, "montecarlo", walk_reps, derive_seed(case_seed, 0), threads)
                    tree = brute_force_tree_moment(prof, N, k, beta, bar, 1, tree_reps, derive_seed(case_seed, 1), threads)
                    rows.append(CheckRow("many-to-one", f"{name}-N{N}-k{k}-b{frac:g}", walk.mean, walk.stderr, tree.mean, tree.stderr, walk.agrees(tree)))
    return rows


def many_to_two_suite(
    profiles: dict[str, CovarianceProfile], Ns, ks, fractions, walk_reps, tree_reps, seed, threads=None
) -> list[CheckRow]:
    """Pair decomposition against tree-form E[(Z^{(k),<=})^2], plus the beta = 0 count."""
    rows = []
    for pi, (name, prof) in enumerate(profiles.items()):
        for N in Ns:
            for k in ks:
                for fi, (frac, beta) in enumerate(_beta_grid(prof, fractions)):
                    bar = recommended_ab(prof, beta)
                    case_seed = derive_seed(seed, 4, pi, N, k, fi)
                    walk = many_to_two_expectation(prof, N, k, beta, bar, "montecarlo", walk_reps, derive_seed(case_seed, 0), threads)
                    tree = brute_force_tree_moment(prof, N, k, beta, bar, 2, tree_reps, derive_seed(case_seed, 1), threads)
                    rows.append(CheckRow("many-to-two", f"{name}-N{N}-k{k}-b{frac:g}", walk.mean, walk.stderr, tree.mean, tree.stderr, walk.agrees(tree)))
                count = many_to_two_expectation(prof, N, k, 0.0, None, "montecarlo", 1000, derive_seed(seed, 4, pi, N, k, 99), threads)
                exact = float(4 ** (N - k))
                ok = abs(count.mean - exact) <= 1e-12 * exact
                rows.append(CheckRow("many-to-two", f"{name}-N{N}-k{k}-count", count.mean, count.stderr, exact, 0.0, bool(ok)))
    return rows


def one_step_suite(profiles: dict[str, CovarianceProfile], ss, fractions, reps, seed, N=12, k=0, threads=None) -> list[CheckRow]:
    """Monte Carlo of E[M^{-s}] against its closed form."""
    rows = []
    for pi, (name, prof) in enumerate(profiles.items()):
        for fi, (frac, beta) in enumerate(_beta_grid(prof, fractions)):
            for si, s in enumerate(ss):
                mc = one_step_neg_moment_mc(prof, N, k, beta, s, reps, derive_seed(seed, 5, pi, fi, si), threads)
                exact = one_step_neg_moment(prof, N, k, beta, s)
                ok = agree(mc.mean, mc.stderr, exact, 0.0)
                rows.append(CheckRow("one-step", f"{name}-b{frac:g}-s{s:g}", mc.mean, mc.stderr, exact, 0.0, bool(ok)))
    return rows


def run_suite(suite: str, profile: CovarianceProfile, reps: int, seed: int, tree_reps: int = 20_000, threads=None) -> list[CheckRow]:
    profiles = {"profile": profile}
    fractions = (0.5, 0.9)
    if suite == "tilting":
        return tilting_suite(seed)
    if suite == "many-to-one":
        return many_to_one_suite(profiles, (8, 10), (0, 2), fractions, reps, tree_reps, seed, threads)
    if suite == "many-to-two":
        return many_to_two_suite(profiles, (8,), (0, 2), fractions, reps, tree_reps, seed, threads)
    if suite == "one-step":
        return one_step_suite(profiles, (0.5, 1.0, 2.0), fractions, reps, seed, threads=threads)
    raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")


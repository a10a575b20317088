"""The acceptance suite: ten numbered criteria, each a list of checked cases."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .batch import load_config, numeric_columns, parse_config, rows_to_csv, run_batch
from .bounds import (
    bootstrap_sequences,
    eps_by_product,
    gaussian_tail,
    recommended_ab,
    schedule,
    summability_check,
)
from .errors import CremError
from .estimators import (
    estimate_max,
    estimate_truncated_ratio,
    free_energy_grid,
    neg_moment_grid,
)
from .montecarlo import resolve_threads, tree_batch
from .partition import log_expected_partition, one_step_residual
from .profile import BUILTIN_PROFILES, beta_c, concave_hull, free_energy, load_profile, max_growth_rate
from .rng import derive_seed
from .sampler import sample_tree
from .suites import CheckRow, many_to_one_suite, many_to_two_suite, one_step_suite, tilting_suite

DEFAULT_SEED = 20261015
TITLES = {
    1: "one-step decomposition identity",
    2: "tilting oracle, direct vs tilted quadrature",
    3: "many-to-one, walk vs tree first moments",
    4: "many-to-two, walk vs tree second moments",
    5: "closed forms for E[Z] and the one-step negative moment",
    6: "truncated first moment at least 7/10 of E[Z]",
    7: "negative moments of W bounded across N",
    8: "free energy and maximum per level",
    9: "bounds machinery",
    10: "determinism across thread counts",
}


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    seconds: float
    rows: list[CheckRow] = field(default_factory=list)
    error: str = ""

    @property
    def summary(self) -> str:
        bad = [r.case_id for r in self.rows if not r.passed]
        if self.error:
            return self.error
        if bad:
            return f"{len(bad)}/{len(self.rows)} cases failed: " + ", ".join(bad[:6]) + (" ..." if len(bad) > 6 else "")
        return f"{len(self.rows)} cases"

    def line(self) -> str:
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.title}  ({self.summary}; {self.seconds:.1f}s)"


@dataclass
class AcceptanceReport:
    seed: int
    threads: int
    results: list[CriterionResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "threads": self.threads,
            "passed": self.passed,
            "criteria": [
                {
                    "number": r.number,
                    "title": r.title,
                    "passed": r.passed,
                    "seconds": round(r.seconds, 3),
                    "summary": r.summary,
                    "cases": [dict(zip(CheckRow.header(), _json_cells(row))) for row in r.rows],
                }
                for r in self.results
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        lines = [",".join(["criterion"] + CheckRow.header())]
        for r in self.results:
            for row in r.rows:
                lines.append(",".join([str(r.number)] + row.cells()))
        return "\n".join(lines) + "\n"


def _json_cells(row: CheckRow):
    out = []
    for v in (row.suite, row.case_id, row.value_a, row.se_a, row.value_b, row.se_b, row.passed):
        out.append(v if not isinstance(v, float) or math.isfinite(v) else str(v))
    return out


def _row(crit, case, a, se_a, b, se_b, ok):
    return CheckRow(f"c{crit}", case, float(a), float(se_a), float(b), float(se_b), bool(ok))


# --- criteria ---------------------------------------------------------------


def criterion_1(profiles, seed, threads):
    combos = [(name, N, f) for name in ("lin", "pw1", "pw2") for N in (6, 10, 14) for f in (0.0, 0.5, 0.9)]
    rows = []
    for i in range(50):
        name, N, f = combos[i % len(combos)]
        prof = profiles[name]
        beta = f * beta_c(prof)
        s = sample_tree(prof, N, 0, derive_seed(seed, 1, i))
        r = one_step_residual(s, beta)
        rows.append(_row(1, f"{name}-N{N}-b{f:g}-#{i}", r, 0.0, 1e-10, 0.0, r <= 1e-10))
    return rows


def criterion_2(profiles, seed, threads):
    return tilting_suite(seed, 200)


def criterion_3(profiles, seed, threads):
    sub = {n: profiles[n] for n in ("lin", "pw1")}
    return many_to_one_suite(sub, (8, 10), (0, 2), (0.5, 0.9), 100_000, 20_000, seed, threads)


def criterion_4(profiles, seed, threads):
    sub = {n: profiles[n] for n in ("lin", "pw1")}
    return many_to_two_suite(sub, (8,), (0, 2), (0.5, 0.9), 100_000, 20_000, seed, threads)


def criterion_5(profiles, seed, threads):
    rows = []
    for pi, name in enumerate(("lin", "pw1", "pw2")):
        prof = profiles[name]
        beta = 0.5 * beta_c(prof)
        for N in (12, 16):
            batch = tree_batch(prof, N, 0, derive_seed(seed, 5, pi, N), 20_000, betas=(beta,), threads=threads)
            w = np.exp(batch.log_z[:, 0] - log_expected_partition(prof, N, 0, beta))
            m, se = float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size))
            rows.append(_row(5, f"{name}-N{N}-EZ", m, se, 1.0, 0.0, abs(m - 1.0) <= 3 * se))
    sub = {n: profiles[n] for n in ("lin", "pw1", "pw2")}
    for r in one_step_suite(sub, (0.5, 1.0, 2.0), (0.5, 0.9), 100_000, seed, threads=threads):
        rows.append(_row(5, r.case_id, r.value_a, r.se_a, r.value_b, r.se_b, r.passed))
    return rows


def criterion_6(profiles, seed, threads):
    prof = profiles["lin"]
    beta = 0.5 * beta_c(prof)
    bar = recommended_ab(prof, beta)
    rows = []
    for k in (0, 2):
        est = estimate_truncated_ratio(prof, 16, k, beta, bar, 20_000, derive_seed(seed, 6, k), threads)
        rows.append(_row(6, f"lin-N16-k{k}", est.mean, est.stderr, 0.7, 0.0, est.mean >= 0.7 - 3 * est.stderr))
    return rows


NEG_FRACTIONS = (0.3, 0.5, 0.7)
NEG_S = (0.5, 1.0, 2.0)
NEG_NS = (8, 12, 16, 20)


def criterion_7(profiles, seed, threads, reps=20_000):
    rows = []
    for pi, name in enumerate(("lin", "pw1")):
        prof = profiles[name]
        bc = beta_c(prof)
        betas = [f * bc for f in NEG_FRACTIONS]
        table = {}
        for N in NEG_NS:
            grid = neg_moment_grid(prof, N, betas, NEG_S, reps, derive_seed(seed, 7, pi, N), threads)
            for f, b in zip(NEG_FRACTIONS, betas):
                for s in NEG_S:
                    est = grid[(float(b), float(s))]
                    table[(f, s, N)] = est
                    ok = est.mean >= 1.0 - 3.0 * est.stderr
                    rows.append(_row(7, f"{name}-b{f:g}-s{s:g}-N{N}-jensen", est.mean, est.stderr, 1.0, 0.0, ok))
        for f in NEG_FRACTIONS:
            for s in NEG_S:
                ests = [table[(f, s, N)] for N in NEG_NS]
                hi = max(ests, key=lambda e: e.mean)
                lo = min(ests, key=lambda e: e.mean)
                ok = hi.mean - lo.mean < 5.0 * math.hypot(hi.stderr, lo.stderr)
                rows.append(_row(7, f"{name}-b{f:g}-s{s:g}-bounded-N{hi.N}vsN{lo.N}", hi.mean, hi.stderr, lo.mean, lo.stderr, ok))
    return rows


def criterion_8(profiles, seed, threads):
    rows = []
    lin = profiles["lin"]
    hull = concave_hull(lin)
    fe = free_energy_grid(lin, 20, (0.5 * beta_c(lin), 1.0), 5000, derive_seed(seed, 8, 0), threads)
    for (b, est), label in zip(fe.items(), ("0.5bc", "1")):
        F = free_energy(hull, b)
        rows.append(_row(8, f"lin-N20-b{label}-freeenergy", est.mean, est.stderr, F, 0.0, abs(est.mean - F) < 0.05))
    for pi, name in enumerate(("lin", "pw1")):
        prof = profiles[name]
        limit = max_growth_rate(concave_hull(prof))
        m20 = estimate_max(prof, 20, 2000, derive_seed(seed, 8, 1, pi, 20), threads)
        m10 = estimate_max(prof, 10, 2000, derive_seed(seed, 8, 1, pi, 10), threads)
        ok20 = 0.0 <= limit - m20.mean < 0.25
        rows.append(_row(8, f"{name}-N20-max", m20.mean, m20.stderr, limit, 0.0, ok20))
        closer = abs(limit - m20.mean) < abs(limit - m10.mean)
        rows.append(_row(8, f"{name}-max-N20-closer-than-N10", m20.mean, m20.stderr, m10.mean, m10.stderr, closer))
    return rows


def criterion_9(profiles, seed, threads):
    rows = []
    eta0, gamma, C, s, K = 0.5, 1.5, 1.0, 1.0, 25
    seq = bootstrap_sequences(eta0, gamma, C, s, K)
    prod = eps_by_product(eta0, gamma, C, s, K)
    # the plain product is only accurate while every eta_n is a normal double
    usable = np.logical_and.accumulate(np.concatenate(([True], seq.log_eta[:-1] > math.log(1e-290))))
    rel = float(np.max(np.abs(seq.eps[usable] - prod[usable]) / prod[usable]))
    rows.append(_row(9, "eps-recursion-vs-product", rel, 0.0, 1e-10, 0.0, rel <= 1e-10))
    log_prod = np.concatenate(([-math.log(2.0)], -math.log(2.0) + np.cumsum(
        (0.5 * gamma * seq.log_eta[:-1] + np.log(-np.expm1((1 - 0.5 * gamma) * seq.log_eta[:-1])) - math.log(C)) / (10 * s)
    )))
    rel_log = float(np.max(np.abs(seq.log_eps - log_prod) / np.abs(log_prod)))
    rows.append(_row(9, "log-eps-recursion-vs-product", rel_log, 0.0, 1e-10, 0.0, rel_log <= 1e-10))
    rep = summability_check(seq, s)
    rows.append(_row(9, "summability-cauchy", rep.tail_ratio, 0.0, 1e-8, 0.0, rep.tail_ratio < 1e-8))
    for r in (0.1, 0.5, 1, 2, 3, 5, 10):
        integral, bound = gaussian_tail(r)
        rows.append(_row(9, f"gaussian-tail-r{r:g}", integral, 0.0, bound, 0.0, integral <= bound))
    K100, K1 = schedule(100, 1.5)
    rows.append(_row(9, "schedule-N100-g1.5", K100, 0.0, 22, 0.0, K100 == 22 and K1 == 484))
    return rows


def acceptance_batch_config():
    text = resources.files("crem").joinpath("data/acceptance_batch.json").read_text()
    return parse_config(json.loads(text))


def criterion_10(profiles, seed, threads):
    cfg = acceptance_batch_config()
    cfg.seed = int(seed)
    one = rows_to_csv(run_batch(cfg, threads=1))
    eight = rows_to_csv(run_batch(cfg, threads=8))
    same = numeric_columns(one) == numeric_columns(eight)
    return [_row(10, "batch-1-vs-8-threads", len(one), 0.0, len(eight), 0.0, same and one == eight)]


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
}


def load_profiles(profile_dir: str | Path | None = None) -> dict:
    """Builtin lin/pw1/pw2, or <dir>/<name>.json when a directory is given.

    A profile that fails to load is kept as its exception so that only the
    criteria using it fail.
    """
    out = {}
    for name in BUILTIN_PROFILES:
        src = name if profile_dir is None else str(Path(profile_dir) / f"{name}.json")
        try:
            out[name] = load_profile(src)
        except (CremError, OSError, ValueError) as exc:
            out[name] = exc
    return out


class _Profiles(dict):
    def __getitem__(self, name):
        v = super().__getitem__(name)
        if isinstance(v, Exception):
            raise CremError(f"profile {name!r} unusable: {v}")
        return v


def run_criterion(number: int, seed: int = DEFAULT_SEED, threads: int | None = None, profiles=None) -> CriterionResult:
    profiles = _Profiles(profiles if profiles is not None else load_profiles())
    t0 = time.perf_counter()
    try:
        rows = CRITERIA[number](profiles, seed, threads)
        passed, err = bool(rows) and all(r.passed for r in rows), ""
    except (CremError, OSError, ValueError) as exc:
        rows, passed, err = [], False, f"{type(exc).__name__}: {exc}"
    return CriterionResult(number, TITLES[number], passed, time.perf_counter() - t0, rows, err)


def acceptance_suite(seed: int = DEFAULT_SEED, threads: int | None = None, only=None, profile_dir=None, log=None) -> AcceptanceReport:
    """Run the selected criteria (all by default) and collect a report."""
    profiles = load_profiles(profile_dir)
    results = []
    for n in sorted(only or CRITERIA):
        res = run_criterion(n, seed, threads, profiles)
        if log is not None:
            log(res.line())
        results.append(res)
    return AcceptanceReport(int(seed), resolve_threads(threads), results)

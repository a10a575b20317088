import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crem.bounds import log_one_step_constant
from crem.errors import DepthTooLarge, DomainError
from crem.estimators import (
    bootstrap_inequality_check,
    clopper_pearson_upper,
    estimate_free_energy,
    estimate_left_tail,
    estimate_max,
    estimate_neg_moment,
    left_tail_grid,
    neg_moment_grid,
)
from crem.montecarlo import agree
from crem.partition import log_expected_partition
from crem.profile import beta_c, builtin_profile, free_energy, max_growth_rate

LOG2 = math.log(2.0)
ONE_OVER_SQRT_PI = 0.56418958354775628695


def test_neg_moment_beta_zero_exact(lin):
    est = estimate_neg_moment(lin, 10, 0.0, 2.0, 200, 1)
    assert est.mean == 1.0
    assert est.stderr == 0.0


def test_neg_moment_jensen_side(lin):
    est = estimate_neg_moment(lin, 12, 0.5 * beta_c(lin), 1.0, 20_000, 12)
    assert est.mean >= 1 - 3 * est.stderr


def test_neg_moment_bounded_over_N(lin):
    beta = 0.5 * beta_c(lin)
    # the N = 20 point is covered by the acceptance suite
    ests = [estimate_neg_moment(lin, N, beta, 1.0, 10_000, 100 + N) for N in (8, 12, 16)]
    for i, a in enumerate(ests):
        for b in ests[i + 1 :]:
            assert abs(a.mean - b.mean) < 5 * math.hypot(a.stderr, b.stderr)


def test_neg_moment_metadata(pw1):
    est = estimate_neg_moment(pw1, 6, 0.4, 1.5, 300, 77)
    assert (est.N, est.k, est.beta, est.param, est.reps, est.seed) == (6, 0, 0.4, 1.5, 300, 77)
    assert est.profile_hash == pw1.digest()


def test_neg_moment_needs_enough_reps(lin):
    with pytest.raises(DomainError):
        estimate_neg_moment(lin, 6, 0.4, 1.0, 99, 1)


def test_neg_moment_depth_limit(lin):
    with pytest.raises(DepthTooLarge):
        estimate_neg_moment(lin, 27, 0.4, 1.0, 100, 1)


def test_neg_moment_single_particle_ceiling(pw1):
    N, beta, s = 10, 0.6, 2.0
    est = estimate_neg_moment(pw1, N, beta, s, 2000, 3)
    ceiling = math.exp(s * log_expected_partition(pw1, N, 0, beta) + 0.5 * beta**2 * s**2 * N)
    assert est.mean <= ceiling


def test_grid_matches_single_calls(lin):
    grid = neg_moment_grid(lin, 8, [0.3, 0.6], [0.5, 2.0], 400, 9)
    single = estimate_neg_moment(lin, 8, 0.6, 2.0, 400, 9)
    assert grid[(0.6, 2.0)] == single


def test_heavy_tail_flag(lin):
    est = estimate_neg_moment(lin, 12, 1.1, 4.0, 200, 4)
    assert est.warn == "heavy-tail"


def test_left_tail_beta_zero(lin):
    est = estimate_left_tail(lin, 12, 0, 0.0, 0.5, 500, 1)
    assert est.mean == 0.0
    assert est.warn == "no-hits"
    assert 0 < est.upper < 0.01


@pytest.mark.parametrize("k", [0, 3])
def test_left_tail_margin_below_one(lin, k):
    est = estimate_left_tail(lin, 12, k, 0.5 * beta_c(lin), 0.5, 20_000, 40 + k)
    assert est.mean < 1 - 3 * est.stderr
    assert est.upper >= est.mean


def test_left_tail_epsilon_checked(lin):
    with pytest.raises(DomainError):
        estimate_left_tail(lin, 8, 0, 0.5, 1.0, 100, 1)


def test_clopper_pearson_reference():
    # zero hits: 1 - 0.05^{1/n}
    assert clopper_pearson_upper(0, 1000) == pytest.approx(1 - 0.05 ** (1 / 1000), rel=1e-10)
    assert clopper_pearson_upper(10, 10) == 1.0
    assert clopper_pearson_upper(5, 100) > 0.05


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["lin", "pw1"]), st.integers(2, 9), st.floats(0.1, 0.9), st.integers(0, 2**32))
def test_left_tail_monotone_in_epsilon(name, N, frac, seed):
    prof = builtin_profile(name)
    eps = [0.05, 0.2, 0.5, 0.8, 0.95]
    grid = left_tail_grid(prof, N, 0, [frac * beta_c(prof)], eps, 300, seed)
    vals = [grid[(frac * beta_c(prof), e)].mean for e in eps]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_free_energy_beta_zero_exact(pw1):
    est = estimate_free_energy(pw1, 14, 0.0, 100, 1)
    assert est.mean == LOG2
    assert est.stderr == 0.0


def test_free_energy_below_limit_and_approaching(lin):
    F = free_energy(lin, 0.5)
    e10 = estimate_free_energy(lin, 10, 0.5, 2000, 10)
    e20 = estimate_free_energy(lin, 20, 0.5, 500, 20)
    assert e10.mean < F and e20.mean < F
    assert abs(e20.mean - F) < abs(e10.mean - F)
    assert abs(e20.mean - F) < 0.05


def test_max_of_two_normals(lin):
    est = estimate_max(lin, 1, 20_000, 5)
    assert agree(est.mean, est.stderr, ONE_OVER_SQRT_PI, 0.0)


@pytest.mark.parametrize("name", ["lin", "pw1"])
def test_max_below_growth_rate(name):
    prof = builtin_profile(name)
    est = estimate_max(prof, 20, 200, 6)
    assert max_growth_rate(prof) - 0.25 < est.mean < max_growth_rate(prof)


def test_bootstrap_check_beta_zero(lin):
    rep = bootstrap_inequality_check(lin, 10, 0, 0.0, 0.5, 0.4, 300, 1)
    assert rep.p_lhs == rep.p_next == rep.p_step == 0.0
    assert rep.holds and rep.markov_holds


def test_bootstrap_check_subcritical(lin):
    rep = bootstrap_inequality_check(lin, 12, 0, 0.5 * beta_c(lin), 0.5, 0.5, 20_000, 7)
    assert rep.holds
    assert rep.markov_holds
    assert agree(rep.p_step, rep.se_step, rep.p_step_exact, 0.0)
    assert rep.markov_bound <= rep.markov_bound_uniform
    assert rep.markov_bound_uniform == pytest.approx(
        math.exp(log_one_step_constant(lin, 0.5 * beta_c(lin), 10.0)) * 0.5**10, rel=1e-12
    )


def test_bootstrap_check_last_level(pw1):
    rep = bootstrap_inequality_check(pw1, 6, 5, 0.5, 0.5, 0.5, 500, 2)
    assert rep.p_next == 0.0  # empty subtree has Z = E[Z] = 1


@pytest.mark.parametrize("threads", [2, 5])
def test_estimates_independent_of_threads(pw1, threads):
    a = estimate_neg_moment(pw1, 11, 0.5, 1.0, 3000, 8, threads=1)
    b = estimate_neg_moment(pw1, 11, 0.5, 1.0, 3000, 8, threads=threads)
    assert a == b

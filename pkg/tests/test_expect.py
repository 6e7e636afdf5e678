import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trigfree.counts import (
    BetaBinomial,
    BetaNegBinomial,
    Binomial,
    Hurdle,
    NegBinomial,
    ResourceLimitError,
    ZeroInflated,
    make_rng,
)
from trigfree.expect import (
    choose_M,
    gfwl_tail_error,
    psi1_calibrated,
    psi1_exact_finite,
    psi1_expect,
    psi1_gfwl,
    psi1_many,
    psi1_monte_carlo,
    psi1_trigamma_free,
    psi_digamma_expect,
    resolve_M,
    rho_star,
    sandwich_bounds,
    tail_error,
    truncation_bound,
    worst_case_factor,
)
from trigfree.specfun import DomainError, count_trigamma, digamma, trigamma

mp.mp.dps = 30

NB10 = NegBinomial(10, 0.1)


def enum_psi1(nu, model, n):
    y = np.arange(n + 1)
    return math.fsum(model.pmf(y) * trigamma(nu + y))


def mp_enum_psi1(nu, p, n):
    # exact binomial expectation in extended precision
    return float(mp.fsum(mp.binomial(n, k) * mp.mpf(p) ** k * (1 - mp.mpf(p)) ** (n - k)
                         * mp.psi(1, nu + k) for k in range(n + 1)))


# ---------------------------------------------------------------- degenerate Y = 0

@pytest.mark.parametrize("fn", [psi1_trigamma_free, psi1_calibrated, psi1_gfwl])
@pytest.mark.parametrize("M", [0, 3, 50])
def test_degenerate_zero(fn, M):
    r = fn(2.7, Binomial(0, 0.4), M)
    assert r.value == trigamma(2.7)
    assert r.bound == 0.0


def test_degenerate_mc_and_digamma():
    r = psi1_monte_carlo(2.7, Binomial(0, 0.4), 100, make_rng(1))
    assert r.value == pytest.approx(trigamma(2.7), rel=1e-15)
    assert psi_digamma_expect(2.7, Binomial(0, 0.4), 5).value == digamma(2.7)
    assert psi1_exact_finite(2.7, Binomial(0, 0.4)).value == trigamma(2.7)


# ---------------------------------------------------------------- reference values

def test_reference_value():
    r = psi1_trigamma_free(10, NB10, 10**6)
    assert abs(r.value - 0.01104294) <= 5e-9
    assert r.trigamma_evals == 1


def test_reference_vs_mp():
    # E psi1(10 + Y), Y ~ NB(10, 0.1), by brute force in extended precision
    nu, p = mp.mpf(10), mp.mpf("0.1")
    term = p**nu
    total = mp.mpf(0)
    for k in range(2500):
        total += term * mp.psi(1, nu + k)
        term *= (nu + k) * (1 - p) / (k + 1)
    assert psi1_trigamma_free(10, NB10, 10**5).value == pytest.approx(float(total), rel=1e-13)


def test_binomial_enumeration():
    m = Binomial(3, 0.5)
    want = mp_enum_psi1(1, 0.5, 3)
    for M in (2, 3, 10):
        assert psi1_trigamma_free(1, m, M).value == pytest.approx(want, abs=1e-15)
    assert psi1_exact_finite(1, m).value == pytest.approx(want, abs=1e-15)


def test_gfwl_small_enumeration():
    # psi1(1) P0 + psi1(2) P1 + psi1(3) P(Y > 1) / 2
    m = Binomial(3, 0.5)
    want = trigamma(1) / 8 + trigamma(2) * 3 / 8 + 0.5 * trigamma(3) * 0.5
    assert psi1_gfwl(1, m, 1).value == pytest.approx(want, rel=1e-15)


def test_calibrated_beats_trigamma_free_small_M():
    ref = psi1_trigamma_free(10, NB10, 10**6).value
    tf = psi1_trigamma_free(10, NB10, 30).value
    cal = psi1_calibrated(10, NB10, 30).value
    assert abs(cal - ref) < abs(tf - ref)


def test_rho_star():
    assert rho_star(1, 0) == pytest.approx(7 / 12, rel=1e-15)
    for nu, M in [(0.1, 0), (3, 17), (1e4, 1e6)]:
        r = rho_star(nu, M)
        assert 0.5 < r < 1
        assert worst_case_factor(r, nu, M) < worst_case_factor(0.0, nu, M) == 1.0
        # rho* minimises U on a fine grid
        grid = np.linspace(0, 1, 2001)
        assert worst_case_factor(r, nu, M) <= min(worst_case_factor(g, nu, M) for g in grid) + 1e-12


# ---------------------------------------------------------------- exact finite

def test_exact_finite_bit_identical():
    m = BetaBinomial(30, 2.0, 3.5)
    a = psi1_exact_finite(4.2, m).value
    b = psi1_trigamma_free(4.2, m, 29).value
    assert a == b


def test_exact_finite_rejects_infinite():
    with pytest.raises(DomainError):
        psi1_exact_finite(1.0, NB10)


@settings(max_examples=80, deadline=None)
@given(n=st.integers(0, 200), p=st.floats(0.01, 0.99), nu=st.floats(0.05, 50.0))
def test_exact_finite_vs_enumeration(n, p, nu):
    m = Binomial(n, p)
    assert abs(psi1_exact_finite(nu, m).value - enum_psi1(nu, m, n)) <= 1e-12 * max(1.0, trigamma(nu))


# ---------------------------------------------------------------- digamma analogue

def test_digamma_binomial_enumeration():
    m = Binomial(3, 0.5)
    y = np.arange(4)
    want = math.fsum(m.pmf(y) * digamma(1 + y))
    for M in (2, 5):
        assert psi_digamma_expect(1, m, M).value == pytest.approx(want, abs=1e-15)
    assert psi_digamma_expect(1, m, 5).bound == 0.0


def test_digamma_self_consistency():
    a = psi_digamma_expect(10, NB10, 10**6)
    b = psi_digamma_expect(10, NB10, 2 * 10**6)
    assert abs(a.value - b.value) <= 1e-12
    # a zero tail makes the bound exact; a live tail only has a heuristic one
    assert a.rigorous and a.bound == 0.0
    assert not psi_digamma_expect(10, NB10, 200).rigorous
    with count_trigamma() as calls:
        psi_digamma_expect(10, NB10, 1000)
    assert calls() == 0


def test_digamma_vs_mp():
    nu, p = mp.mpf(3), mp.mpf("0.4")
    term, total = p**nu, mp.mpf(0)
    for k in range(400):
        total += term * mp.digamma(nu + k)
        term *= (nu + k) * (1 - p) / (k + 1)
    assert psi_digamma_expect(3, NegBinomial(3, 0.4), 400).value == pytest.approx(float(total), rel=1e-14)


# ---------------------------------------------------------------- bounds and tail errors

def test_bound_finite_support_zero():
    assert truncation_bound(2.0, Binomial(5, 0.3), 4) == 0.0
    assert truncation_bound(2.0, Binomial(5, 0.3), 3) > 0.0


def test_bound_example_bnb():
    b = truncation_bound(4.733, BetaNegBinomial(4.733, 4.504, 4.733), 11000)
    # same order as the published 1.94e-17
    assert b == pytest.approx(1.94e-17, rel=0.1)


def test_bound_dominates_direct_tail():
    t = NB10.tail_table(10**6)
    y = np.arange(181, 10**6 + 1)
    direct = math.fsum(t.survival[182:] / (10.0 + y) ** 2)
    assert 0 <= direct <= truncation_bound(10, NB10, 180)


def test_tail_error_matches_subtraction_when_representable():
    ref = psi1_trigamma_free(10, NB10, 10**5).value
    for M in (20, 60, 100):
        e = tail_error(10, NB10, M, 10**5)
        assert e == pytest.approx(psi1_trigamma_free(10, NB10, M).value - ref, rel=1e-9)


def test_gfwl_tail_error_matches_subtraction():
    ref = psi1_trigamma_free(10, NB10, 10**5).value
    for M in (20, 60, 100):
        e = gfwl_tail_error(10, NB10, M, 10**5)
        assert e == pytest.approx(psi1_gfwl(10, NB10, M).value - ref, rel=1e-8)


def test_tail_errors_finite_support():
    m = Binomial(10, 0.3)
    assert tail_error(1.0, m, 9, 50) == 0.0
    assert gfwl_tail_error(1.0, m, 10, 50) == 0.0


def test_table1_first_and_last():
    m = NegBinomial(100, 0.01)
    t = m.tail_table(10**6)
    e1 = tail_error(100, m, 10000, table=t)
    eg = gfwl_tail_error(100, m, 10000, table=t)
    assert math.log(abs(e1)) == pytest.approx(-12.70, abs=0.1)
    assert math.log(abs(eg)) == pytest.approx(-10.87, abs=0.1)
    assert abs(eg / e1) == pytest.approx(6.24, rel=0.05)
    e1 = tail_error(100, m, 22000, table=t)
    eg = gfwl_tail_error(100, m, 22000, table=t)
    assert math.log(abs(e1)) == pytest.approx(-60.32, abs=0.2)
    assert abs(eg / e1) == pytest.approx(62.04, rel=0.1)


def test_tail_error_requires_larger_reference():
    with pytest.raises(DomainError):
        tail_error(1.0, NB10, 100, 100)


FAMILY = st.sampled_from(["nb", "bnb", "zinb"])


def random_model(draw):
    fam = draw(FAMILY)
    nu = draw(st.floats(0.1, 50))
    if fam == "nb":
        return nu, NegBinomial(nu, draw(st.floats(0.02, 0.95)))
    if fam == "bnb":
        return nu, BetaNegBinomial(nu, draw(st.floats(1.5, 20)), draw(st.floats(0.2, 10)))
    return nu, ZeroInflated(draw(st.floats(0.01, 0.9)), NegBinomial(nu, draw(st.floats(0.02, 0.95))))


@settings(max_examples=60, deadline=None)
@given(st.data(), st.integers(0, 400))
def test_truncation_bound_property(data, M):
    nu, model = random_model(data.draw)
    M_ref = M + 20000
    t = model.tail_table(M_ref)
    e = tail_error(nu, model, M, M_ref, table=t)
    assert 0.0 <= e <= truncation_bound(nu, model, M, table=t)


@settings(max_examples=40, deadline=None)
@given(st.data(), st.integers(0, 300))
def test_sandwich_and_calibration_property(data, M):
    nu, model = random_model(data.draw)
    M_ref = M + 20000
    lo, hi = sandwich_bounds(nu, model, M, M_ref)
    e = tail_error(nu, model, M, M_ref)
    slack = 1e-15 * truncation_bound(nu, model, M) + 1e-300
    assert lo - slack <= e <= hi + slack
    # calibrated error within U(rho*) * bound
    ref = psi1_trigamma_free(nu, model, M_ref).value
    cal = psi1_calibrated(nu, model, M)
    assert abs(cal.value - ref) <= cal.bound + 4e-16 * max(1.0, abs(ref))


# ---------------------------------------------------------------- evaluation counts

@pytest.mark.parametrize("M", [10, 1000, 100_000])
def test_trigamma_counts(M):
    t = NB10.tail_table(M)
    for fn, want in [(psi1_trigamma_free, 1), (psi1_calibrated, 1), (psi1_gfwl, M + 2)]:
        with count_trigamma() as calls:
            r = fn(10, NB10, M, table=t)
        assert calls() == want == r.trigamma_evals


def test_monte_carlo_count():
    with count_trigamma() as calls:
        r = psi1_monte_carlo(10, NB10, 500, make_rng(3))
    assert calls() == 500 == r.trigamma_evals
    assert r.bound is None


# ---------------------------------------------------------------- Monte Carlo behaviour

def test_monte_carlo_error_and_scaling():
    ref = psi1_trigamma_free(10, NB10, 10**6).value
    tf_err = abs(psi1_trigamma_free(10, NB10, 10**4).value - ref)
    e1 = [abs(psi1_monte_carlo(10, NB10, 10**4, make_rng(42, r)).value - ref) for r in range(200)]
    e4 = [abs(psi1_monte_carlo(10, NB10, 4 * 10**4, make_rng(43, r)).value - ref) for r in range(200)]
    assert np.median(e1) > 1e3 * tf_err
    assert 0.35 <= np.median(e4) / np.median(e1) <= 0.7


def test_monte_carlo_needs_positive_M():
    with pytest.raises(DomainError):
        psi1_monte_carlo(1.0, NB10, 0, make_rng(0))


# ---------------------------------------------------------------- dispatch and sharing

def test_dispatch_and_many():
    t = NB10.tail_table(200)
    assert psi1_expect(10, NB10, 200, "trigamma-free").value == psi1_trigamma_free(10, NB10, 200, t).value
    assert psi1_expect(10, NB10, 200, "gfwl").value == psi1_gfwl(10, NB10, 200).value
    many = psi1_many([10, 12.5], NB10, 200, "calibrated")
    assert many[1].value == psi1_calibrated(12.5, NB10, 200).value
    with pytest.raises(DomainError):
        psi1_expect(10, NB10, 200, "monte_carlo")
    with pytest.raises(DomainError):
        psi1_expect(10, NB10, 200, "bogus")


def test_larger_table_is_reused_exactly():
    big = NB10.tail_table(5000)
    assert psi1_trigamma_free(10, NB10, 300, table=big).value == psi1_trigamma_free(10, NB10, 300).value


def test_invariance_beyond_negligible_tail():
    vals = {psi1_trigamma_free(10, NB10, M).value for M in (2000, 5000, 20000, 10**6)}
    assert len(vals) == 1


def test_nu_validation():
    with pytest.raises(DomainError):
        psi1_trigamma_free(0.0, NB10, 10)
    with pytest.raises(DomainError):
        psi1_trigamma_free(1.0, NB10, -1)


# ---------------------------------------------------------------- choose_M

def test_choose_M_examples():
    assert choose_M(10, NB10) == 181
    assert choose_M(10, ZeroInflated(0.4, NB10)) == 109
    assert choose_M(1.0, Binomial(7, 0.3), "tolerance", 0.0) == 6


def test_choose_M_tolerance_minimal():
    tol = 1e-10
    M = choose_M(10, NB10, "tolerance", tol)
    assert truncation_bound(10, NB10, M) <= tol < truncation_bound(10, NB10, M - 1)


def test_choose_M_infinite_mean_fallback():
    m = BetaNegBinomial(2, 0.5, 3)
    with pytest.raises(ResourceLimitError):
        choose_M(2, m)
    # a heavier alpha with infinite mean but a reachable tolerance
    m = BetaNegBinomial(2, 1.0, 0.5)
    M = choose_M(2, m, "tolerance", 1e-6)
    assert truncation_bound(2, m, M) <= 1e-6


def test_choose_M_cap():
    with pytest.raises(ResourceLimitError):
        choose_M(1.0, NegBinomial(1, 1e-6), cap=1000)


def test_resolve_M_forms():
    assert resolve_M(10, NB10, 500) == 500
    assert resolve_M(10, NB10, "default") == 181
    assert resolve_M(10, NB10, "policy:default") == 181
    assert resolve_M(10, NB10, "tol:1e-10") == choose_M(10, NB10, "tolerance", 1e-10)
    assert resolve_M(10, NB10, ("tolerance", 1e-10)) == choose_M(10, NB10, "tolerance", 1e-10)


def test_hurdle_choose_M():
    m = Hurdle(0.3, NegBinomial(2, 0.2))
    assert choose_M(2, m) == math.ceil(2 * m.mean()) + 1

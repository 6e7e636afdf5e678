import math
import threading

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trigfree.specfun import (
    DomainError,
    count_trigamma,
    digamma,
    log_beta,
    log_gamma,
    normal_cdf,
    normal_quantile,
    trigamma,
    trigamma_calls,
)

mp.mp.dps = 40

# log-uniform grid over the advertised range
GRID = np.exp(np.linspace(math.log(1e-4), math.log(1e8), 400))


def scaled_err(got, want):
    # absolute error, relative once the value itself is large
    return abs(got - want) / max(1.0, abs(want))


def test_log_gamma_identities():
    assert log_gamma(1.0) == 0.0
    assert log_gamma(2.0) == 0.0
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-15)


def test_log_gamma_recurrence_oracle():
    want = mp.loggamma(mp.mpf("1.3")) + sum(mp.log(mp.mpf("1.3") + k) for k in range(9))
    assert log_gamma(10.3) == pytest.approx(float(want), rel=1e-14)


@pytest.mark.parametrize("x", np.exp(np.linspace(math.log(1e-6), math.log(1e8), 300)))
def test_log_gamma_relative(x):
    want = float(mp.loggamma(mp.mpf(x)))
    if abs(want) < 1e-3:
        # near the zeros at 1 and 2 use the absolute scale
        assert abs(log_gamma(x) - want) <= 1e-16
    else:
        assert abs(log_gamma(x) - want) <= 1e-13 * abs(want)


def test_log_beta_examples():
    assert log_beta(1.0, 1.0) == 0.0
    assert log_beta(2.0, 3.0) == pytest.approx(math.log(1 / 12), rel=1e-15)
    want = mp.loggamma(4.5) + mp.loggamma(4.7) - mp.loggamma(9.2)
    assert log_beta(4.5, 4.7) == pytest.approx(float(want), rel=1e-13)


@pytest.mark.parametrize("a,b", [(2e4, 0.6), (1e6, 3.0), (5e7, 0.01), (12.0, 1e-4), (1e8, 1e8), (10.0, 10.0)])
def test_log_beta_large_argument(a, b):
    # no cancellation between the two large log-gammas
    want = float(mp.log(mp.beta(a, b)))
    assert abs(log_beta(a, b) - want) <= 1e-14 * max(1.0, abs(want))
    assert abs(log_beta(np.array([a]), np.array([b]))[0] - want) <= 1e-14 * max(1.0, abs(want))


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-4, 1e8), st.floats(1e-4, 1e8))
def test_log_beta_property(a, b):
    want = float(mp.log(mp.beta(a, b)))
    assert abs(log_beta(a, b) - want) <= 1e-13 * max(1.0, abs(want))
    assert log_beta(a, b) == log_beta(b, a)


def test_digamma_examples():
    assert digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-15)
    assert digamma(2.0) == pytest.approx(1 - 0.5772156649015329, abs=1e-15)
    want = digamma(10.37) - math.fsum(1 / (0.37 + j) for j in range(10))
    assert digamma(0.37) == pytest.approx(want, abs=1e-13)


def test_trigamma_examples():
    assert trigamma(1.0) == pytest.approx(math.pi**2 / 6, abs=1e-15)
    assert trigamma(0.5) == pytest.approx(math.pi**2 / 2, abs=1e-14)
    assert trigamma(3.25) == pytest.approx(trigamma(2.25) - 1 / 2.25**2, abs=1e-15)


def test_digamma_grid():
    got = digamma(GRID)
    worst = max(scaled_err(g, float(mp.digamma(mp.mpf(x)))) for g, x in zip(got, GRID))
    assert worst <= 1e-12


def test_trigamma_grid():
    got = trigamma(GRID)
    worst = max(scaled_err(g, float(mp.psi(1, mp.mpf(x)))) for g, x in zip(got, GRID))
    assert worst <= 1e-12


def test_scalar_and_array_paths_agree():
    xs = np.array([1e-4, 0.3, 1.0, 7.5, 9.99, 10.0, 123.4, 1e7])
    assert np.allclose([trigamma(float(x)) for x in xs], trigamma(xs), rtol=1e-15, atol=0)
    assert np.allclose([digamma(float(x)) for x in xs], digamma(xs), rtol=1e-15, atol=1e-15)
    assert np.allclose([log_gamma(float(x)) for x in xs], log_gamma(xs), rtol=1e-15, atol=1e-16)


@pytest.mark.parametrize("fn", [log_gamma, digamma, trigamma])
@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5, math.inf, math.nan])
def test_domain_errors(fn, bad):
    with pytest.raises(DomainError):
        fn(bad)
    with pytest.raises(DomainError):
        fn(np.array([1.0, bad]))


def test_log_beta_domain():
    with pytest.raises(DomainError):
        log_beta(0.0, 1.0)
    with pytest.raises(ValueError):
        log_beta(1.0, -2.0)


def test_recurrences_random():
    rng = np.random.default_rng(11)
    x = rng.uniform(0, 100, 10_000)
    x = x[x > 0]
    assert np.max(np.abs(digamma(x + 1) - digamma(x) - 1 / x)) <= 1e-12
    # use the scaled form where 1/x^2 itself is huge
    d = trigamma(x + 1) - trigamma(x) + 1 / x**2
    assert np.max(np.abs(d) / np.maximum(1.0, trigamma(x))) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 50))
def test_trigamma_telescoping(x, y):
    want = math.fsum([trigamma(x)] + [-1 / (x + j) ** 2 for j in range(y)])
    assert abs(trigamma(x + y) - want) <= 1e-11 * max(1.0, trigamma(x))


def test_monotone():
    x = np.linspace(0.01, 500, 5000)
    assert np.all(np.diff(trigamma(x)) < 0)
    assert np.all(np.diff(digamma(x)) > 0)


def test_derivative_check():
    x = np.linspace(0.5, 50, 200)
    h = 1e-5
    fd = (digamma(x + h) - digamma(x - h)) / (2 * h)
    assert np.max(np.abs(fd / trigamma(x) - 1)) <= 1e-6


def test_counter_counts_elements():
    with count_trigamma() as calls:
        trigamma(2.0)
        trigamma(np.arange(1.0, 11.0))
        assert calls() == 11
    # outside the context nothing accumulates
    trigamma(3.0)
    assert calls() == 11


def test_counter_nested_and_global():
    before = trigamma_calls()
    with count_trigamma() as outer:
        trigamma(1.5)
        with count_trigamma() as inner:
            trigamma(np.ones(4))
        assert inner() == 4
        assert outer() == 5
    assert trigamma_calls() >= before + 5


def test_counter_thread_safe():
    with count_trigamma() as calls:
        def work():
            for _ in range(200):
                trigamma(np.ones(5))
        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert calls() == 8 * 200 * 5


def test_digamma_does_not_count():
    with count_trigamma() as calls:
        digamma(np.arange(1.0, 100.0))
        log_gamma(3.0)
    assert calls() == 0


def test_normal_quantile_roundtrip():
    p = np.array([1e-12, 1e-6, 0.01, 0.025, 0.3, 0.5, 0.8, 0.975, 1 - 1e-9])
    q = normal_quantile(p)
    for pi, qi in zip(p, q):
        assert qi == pytest.approx(float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf(pi) - 1)), rel=1e-13, abs=1e-15)
    assert np.allclose(normal_cdf(q), p, rtol=1e-12)
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, rel=1e-15)
    with pytest.raises(DomainError):
        normal_quantile(1.0)

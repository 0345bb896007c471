import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from serialboot.ar1 import (
    Ar1Series,
    ErrorDistribution,
    OddConditioning,
    TailEstimate,
    compute_residuals,
    condition_decompose,
    conditional_r,
    moment_diagnostic,
    serial_correlation,
    serial_correlation_batch,
    simulate_ar1,
    simulate_paths,
    statistic_s,
)
from serialboot.errors import DegenerateInput, InvalidArgument

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
odd_series = st.integers(1, 15).flatmap(lambda m: hnp.arrays(float, 2 * m + 1, elements=finite))


def _nondegenerate(x):
    return x[0] ** 2 / 2 + np.sum(x[1:-1] ** 2) + x[-1] ** 2 / 2 > 1e-6


# -- error laws -------------------------------------------------------------


@pytest.mark.parametrize("name", ["normal", "t10", "exp"])
def test_error_moments(name):
    dist = ErrorDistribution.from_name(name)
    assert dist.moment(1) == pytest.approx(0.0, abs=1e-14)
    assert dist.moment(2) == pytest.approx(1.0, rel=1e-12)
    draws = dist.sample(np.random.default_rng(5), 400_000)
    assert abs(draws.mean()) < 5 / math.sqrt(400_000)
    assert draws.var() == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("name", ["normal", "t10", "exp"])
def test_error_density_integrates_to_one(name):
    from scipy import integrate

    dist = ErrorDistribution.from_name(name)
    lo, hi = dist.support()
    total, _ = integrate.quad(lambda z: float(dist.pdf(z)), max(lo, -60), 60, limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_student_t_needs_eighth_moment():
    with pytest.raises(InvalidArgument):
        ErrorDistribution("t", 8)
    with pytest.raises(InvalidArgument):
        ErrorDistribution("t", None)
    with pytest.raises(InvalidArgument):
        ErrorDistribution("laplace")


# -- simulation -------------------------------------------------------------


def test_simulate_rho_zero_is_iid():
    s = simulate_ar1(3, 0.0, seed=11)
    eps = np.random.default_rng(11).standard_normal((1, 3))[0]
    np.testing.assert_array_equal(s.x, eps)


def test_simulate_deterministic():
    a = simulate_ar1(39, 0.5, ErrorDistribution("t", 10), seed=3)
    b = simulate_ar1(39, 0.5, ErrorDistribution("t", 10), seed=3)
    np.testing.assert_array_equal(a.x, b.x)


def test_simulate_initial_scaling_and_recursion():
    rho = 0.7
    x = simulate_paths(5, rho, ErrorDistribution(), 1, 8)[0]
    eps = np.random.default_rng(8).standard_normal((1, 5))[0]
    assert x[0] == pytest.approx(eps[0] / math.sqrt(1 - rho**2), rel=1e-15)
    for i in range(1, 5):
        assert x[i] == pytest.approx(rho * x[i - 1] + eps[i], rel=1e-14)


def test_stationary_variance():
    x = simulate_paths(39, 0.5, ErrorDistribution(), 50_000, 4)
    assert x.var() == pytest.approx(4 / 3, rel=0.01)


@pytest.mark.parametrize("n,rho", [(4, 0.5), (1, 0.5), (9, 1.0), (9, -1.2)])
def test_simulate_rejects_bad_input(n, rho):
    with pytest.raises(InvalidArgument):
        simulate_ar1(n, rho)


def test_series_validation():
    with pytest.raises(InvalidArgument):
        Ar1Series(np.ones(4))
    with pytest.raises(InvalidArgument):
        Ar1Series(np.array([1.0, np.nan, 1.0]))
    s = Ar1Series(np.arange(9.0))
    assert (s.n, s.m) == (9, 4)


@pytest.mark.slow
def test_monte_carlo_tail_n9():
    rng = np.random.default_rng(2024)
    hits, total = 0, 0
    for _ in range(10):
        r = serial_correlation_batch(simulate_paths(9, 0.5, ErrorDistribution(), 100_000, rng))
        hits += int(np.sum(r > 0.6))
        total += len(r)
    est = TailEstimate.from_counts(hits, total)
    assert abs(est.probability - 0.2994) <= 3 * est.std_error


# -- serial correlation and S -----------------------------------------------


def test_constant_series():
    assert serial_correlation(np.ones(3)) == 1.0
    assert statistic_s(np.ones(3), 0.5) == 1.0


def test_serial_correlation_extended_precision():
    x = np.random.default_rng(9).standard_normal(9)
    with mpmath.workdps(50):
        xm = [mpmath.mpf(float(v)) for v in x]
        num = sum(xm[i] * xm[i - 1] for i in range(1, 9))
        den = xm[0] ** 2 / 2 + sum(v * v for v in xm[1:-1]) + xm[-1] ** 2 / 2
        exact = float(num / den)
    assert serial_correlation(x) == pytest.approx(exact, rel=1e-14)


def test_zero_series_rejected():
    with pytest.raises(DegenerateInput):
        serial_correlation(np.zeros(5))
    with pytest.raises(DegenerateInput):
        serial_correlation_batch(np.zeros((2, 5)))


def test_batch_matches_scalar():
    x = np.random.default_rng(1).standard_normal((20, 11))
    np.testing.assert_allclose(serial_correlation_batch(x), [serial_correlation(r) for r in x], rtol=0, atol=1e-15)


def test_s_vanishes_at_r():
    x = np.random.default_rng(2).standard_normal(21)
    assert abs(statistic_s(x, serial_correlation(x))) <= 1e-12 * np.dot(x, x)
    assert statistic_s(x, 0.0) == pytest.approx(np.dot(x[1:], x[:-1]), rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(odd_series, st.floats(0.1, 10).filter(lambda c: c != 0) | st.floats(-10, -0.1))
def test_scale_invariance(x, c):
    if not _nondegenerate(x):
        return
    assert serial_correlation(c * x) == pytest.approx(serial_correlation(x), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(odd_series, st.floats(-0.99, 0.99))
def test_s_sign_matches_r(x, u):
    if not _nondegenerate(x):
        return
    r = serial_correlation(x)
    s = statistic_s(x, u)
    if abs(r - u) > 1e-9:
        assert (s > 0) == (r > u)


# -- conditioning -----------------------------------------------------------


def test_decomposition_example():
    c = condition_decompose(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
    np.testing.assert_array_equal(c.a, [4.0, 8.0])
    np.testing.assert_array_equal(c.b, [5.0, 17.0])
    assert c.a_bar_sq == 40.0 and c.b_bar == 11.0 and c.m == 2
    assert c.gap(0.5) == 40 - 44 * 0.25
    assert c.max_feasible_u() == pytest.approx(math.sqrt(10 / 11), rel=1e-15)
    assert c.feasible(0.95) and not c.feasible(0.96)


def _s_decomposed(x, u):
    c = condition_decompose(x)
    even = x[1::2]
    return -u * np.sum((even - c.a / (2 * u)) ** 2) + c.m * c.gap(u) / (4 * u)


def test_decomposition_identity_random():
    rng = np.random.default_rng(12)
    for _ in range(200):
        x = rng.standard_normal(2 * int(rng.integers(1, 40)) + 1) * rng.uniform(0.1, 10)
        u = rng.uniform(0.01, 3)
        s = statistic_s(x, u)
        scale = np.sum(x * x) * max(1.0, u, 1 / u)
        assert abs(s - _s_decomposed(x, u)) <= 1e-10 * scale


@settings(max_examples=200, deadline=None)
@given(odd_series, st.floats(0.05, 5))
def test_decomposition_identity_property(x, u):
    scale = (1 + np.sum(x * x)) * max(1.0, u, 1 / u)
    assert abs(statistic_s(x, u) - _s_decomposed(x, u)) <= 1e-10 * scale


@settings(max_examples=200, deadline=None)
@given(odd_series)
def test_conditioning_invariants(x):
    c = condition_decompose(x)
    assert np.all(c.b >= 0) and c.b_bar >= 0 and c.a_bar_sq >= 0
    assert np.all(c.a**2 <= 4 * c.b * (1 + 1e-12) + 1e-300)


def test_conditional_r_rebuilds_statistic():
    x = np.random.default_rng(3).standard_normal(15)
    c = condition_decompose(x)
    assert conditional_r(c, x[1::2])[0] == pytest.approx(serial_correlation(x), rel=1e-13)


def test_infeasible_u_gives_no_exceedance():
    # with the gap negative, S < 0 whatever the even observations are
    c = OddConditioning.from_odd([1.0, -0.5, 2.0, 0.3])
    u = c.max_feasible_u() + 0.05
    even = np.random.default_rng(0).standard_normal((10_000, c.m)) * 5
    assert np.all(conditional_r(c, even) <= u)


# -- residuals --------------------------------------------------------------


def test_residuals_recover_innovations():
    rho = 0.4
    eps = np.random.default_rng(6).standard_normal(11)
    x = np.empty(11)
    x[0] = eps[0] / math.sqrt(1 - rho**2)
    for i in range(1, 11):
        x[i] = rho * x[i - 1] + eps[i]
    res = compute_residuals(x, rho)
    np.testing.assert_allclose(res.raw, eps[1:], atol=1e-12)


def test_residuals_rebuild_series():
    x = np.random.default_rng(7).standard_normal(9)
    res = compute_residuals(x, 0.3)
    y = np.empty_like(x)
    y[0] = x[0]
    for i in range(1, 9):
        y[i] = 0.3 * y[i - 1] + res.raw[i - 1]
    np.testing.assert_allclose(y, x, atol=1e-13)


@settings(max_examples=200, deadline=None)
@given(odd_series, st.floats(-0.95, 0.95))
def test_standardized_residuals(x, rho0):
    raw = x[1:] - rho0 * x[:-1]
    if np.ptp(raw) < 1e-6 * (1 + np.max(np.abs(raw))):
        return
    res = compute_residuals(x, rho0)
    eta = res.standardized
    assert abs(eta.mean()) <= 1e-12
    assert np.mean(eta**2) == pytest.approx(1.0, rel=1e-12)


def test_residuals_extended_precision():
    x = np.random.default_rng(8).standard_normal(9)
    res = compute_residuals(x, 0.5)
    with mpmath.workdps(50):
        raw = [mpmath.mpf(float(x[i])) - mpmath.mpf(0.5) * mpmath.mpf(float(x[i - 1])) for i in range(1, 9)]
        mean = sum(raw) / 8
        sd = mpmath.sqrt(sum((r - mean) ** 2 for r in raw) / 8)
        eta = [float((r - mean) / sd) for r in raw]
    np.testing.assert_allclose(res.standardized, eta, rtol=1e-12, atol=1e-14)


def test_residuals_degenerate():
    with pytest.raises(DegenerateInput):
        compute_residuals(np.array([1.0, 0.5, 0.25]), 0.5)
    with pytest.raises(InvalidArgument):
        compute_residuals(np.ones(3), 1.0)


# -- diagnostics ------------------------------------------------------------


@pytest.mark.parametrize("x,expected", [((1, 1, 1), (1, 1)), ((0, 1, 0), (0, 0)), ((2, 0, 2), (256, 4))])
def test_moment_diagnostic(x, expected):
    d = moment_diagnostic(np.array(x, dtype=float))
    assert (d["eighth_moment_mean"], d["second_moment_mean"]) == expected


def test_tail_estimate_invariants():
    est = TailEstimate.from_counts(25, 100)
    assert est.probability == 0.25
    assert est.std_error == pytest.approx(math.sqrt(0.25 * 0.75 / 100))
    with pytest.raises(InvalidArgument):
        TailEstimate(1.5, 10, 0.1)


# -- symmetry at rho = 0 ----------------------------------------------------


@pytest.mark.parametrize("name", ["normal", "t10"])
def test_half_probability_at_rho_zero(name):
    dist = ErrorDistribution.from_name(name)
    rng = np.random.default_rng(77)
    hits = 0
    for _ in range(10):
        hits += int(np.sum(serial_correlation_batch(simulate_paths(9, 0.0, dist, 100_000, rng)) > 0))
    est = TailEstimate.from_counts(hits, 1_000_000)
    assert abs(est.probability - 0.5) <= 3 * est.std_error

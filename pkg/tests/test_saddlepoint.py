import math

import numpy as np
import pytest

from serialboot.ar1 import ErrorDistribution, OddConditioning, TailEstimate, conditional_r, simulate_ar1, simulate_paths
from serialboot.cgf import GaussianConditionalCgf, GeneralConditionalCgf, MixtureConditionalCgf, compute_u0
from serialboot.errors import InvalidArgument, NoRootError, SaddleError
from serialboot.numerics import normal_upper_tail
from serialboot.saddlepoint import (
    SMALL_R,
    Ar1Model,
    bn_tail,
    conditional_tail,
    critical_value,
    expected_conditional_tail,
    expected_conditional_tails,
    gaussian_unconditional_tail,
)
from serialboot.streams import stream


def _gauss(n, rho=0.5, seed=0):
    cond = OddConditioning.from_odd(simulate_ar1(n, rho, seed=seed).x[0::2])
    return GaussianConditionalCgf.from_conditioning(cond, rho)


def _full_formula(t_hat, k, k20, m):
    w = math.copysign(math.sqrt(-2 * k), t_hat)
    psi = w / (t_hat * math.sqrt(k20))
    return normal_upper_tail(math.sqrt(m) * (w - math.log(psi) / (m * w)))


# -- unconditional ----------------------------------------------------------


@pytest.mark.parametrize("u,expected,tol", [(0.55, 0.3210, 1e-3), (0.75, 0.0088, 5e-4)])
def test_unconditional_reference_values_n39(u, expected, tol):
    assert abs(gaussian_unconditional_tail(39, 0.5, u).tail - expected) <= tol


def test_unconditional_reference_value_n9():
    res = gaussian_unconditional_tail(9, 0.5, 0.6)
    assert abs(res.tail - 0.2937) <= 1e-3
    assert res.t_hat > 0


def test_unconditional_symmetric_point():
    res = gaussian_unconditional_tail(9, 0.0, 0.0)
    assert res.tail == 0.5 and res.t_hat == 0.0


def test_unconditional_u0_is_trace_ratio():
    res = gaussian_unconditional_tail(39, 0.5, 0.6)
    assert res.u0 == pytest.approx(0.5, abs=1e-12)


def test_unconditional_monotone_and_both_sides():
    us = np.linspace(-0.6, 0.95, 32)
    tails = [gaussian_unconditional_tail(19, 0.3, u).tail for u in us]
    assert np.all(np.diff(tails) <= 0)
    assert tails[0] > 0.99 and tails[-1] < 1e-4


def test_unconditional_rejects_out_of_range():
    with pytest.raises(InvalidArgument):
        gaussian_unconditional_tail(9, 0.5, 1.0)


def test_unconditional_residual():
    from serialboot.cgf import GaussianUnconditionalCgf

    for u in (0.1, 0.55, 0.7, 0.85):
        res = gaussian_unconditional_tail(39, 0.5, u)
        cgf = GaussianUnconditionalCgf(39, 0.5, u)
        assert abs(cgf.evaluate(res.t_hat).k10) <= 1e-10 * (1 + abs(cgf.evaluate(0.0).k10))


# -- conditional ------------------------------------------------------------


def test_infeasible_conditioning_gives_zero():
    g = _gauss(9, seed=1)
    u = g.conditioning.max_feasible_u() * 1.01
    res = conditional_tail(g, u)
    assert res.tail == 0.0 and not res.feasible


def test_conditional_rejects_nonpositive_u():
    with pytest.raises(InvalidArgument):
        conditional_tail(_gauss(9), 0.0)


def test_saddle_positive_above_u0_and_residual_small():
    rng = np.random.default_rng(4)
    for seed in range(30):
        g = _gauss(39, seed=seed)
        u0 = compute_u0(g).u0
        for u in u0 + np.array([0.01, 0.05, 0.1, 0.2]):
            if not g.gap(u) > 0 or u <= 0:
                continue
            res = conditional_tail(g, u)
            assert res.t_hat > 0
            k10_0 = g.evaluate(0.0, u).k10
            assert abs(g.evaluate(res.t_hat, u).k10) <= 1e-10 * (1 + abs(k10_0))
        u_below = u0 - rng.uniform(0.01, 0.2)
        if u_below > 0:
            res = conditional_tail(g, u_below)
            assert res.t_hat < 0 and res.tail > 0.5


def test_conditional_monotone_on_grid():
    for seed in range(10):
        g = _gauss(39, seed=seed)
        u0 = compute_u0(g).u0
        us = [u for u in u0 + 0.01 * np.arange(1, 40) if g.gap(u) > 0]
        tails = [conditional_tail(g, u).tail for u in us]
        assert np.all(np.diff(tails) <= 0)


def test_tail_at_u0_is_the_continuous_limit():
    # at t_hat = 0, sqrt(m) W+ tends to minus the skewness term K30/(6 sqrt(m) K20^1.5)
    g = _gauss(39, seed=2)
    u0 = compute_u0(g).u0
    res = conditional_tail(g, u0)
    assert abs(res.t_hat) < 1e-8
    h = 1e-4
    k20 = lambda t: g.evaluate(t, u0).k20  # noqa: E731
    k30 = (k20(h) - k20(-h)) / (2 * h)
    skew = k30 / (6 * math.sqrt(g.m) * k20(0.0) ** 1.5)
    assert res.tail == pytest.approx(normal_upper_tail(skew), abs=1e-7)
    for d in (1e-3, 1e-2):
        lo, hi = conditional_tail(g, u0 - d).tail, conditional_tail(g, u0 + d).tail
        assert lo > res.tail > hi


def test_switch_point_continuity():
    g = _gauss(39, seed=3)
    u0 = compute_u0(g).u0
    m = g.m

    def r_of(u):
        res = conditional_tail(g, u)
        return math.sqrt(m) * res.w

    # locate the u where sqrt(m) W crosses SMALL_R by bisection
    lo, hi = u0, u0 + 0.01
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if r_of(mid) < SMALL_R else (lo, mid)
    inside, outside = conditional_tail(g, lo), conditional_tail(g, hi)
    e = g.evaluate(inside.t_hat, lo)
    assert abs(inside.tail - _full_formula(inside.t_hat, e.k, e.k20, m)) <= 1e-6
    assert abs(inside.tail - outside.tail) <= 1e-6


def test_bn_tail_without_higher_drops_correction():
    w, psi, w_plus, tail = bn_tail(0.0, 0.0, 1.0, 10)
    assert (w, psi, w_plus, tail) == (0.0, 1.0, 0.0, 0.5)


@pytest.mark.parametrize("m", [4, 19])
def test_gaussian_matches_general_backend(m):
    cond = OddConditioning.from_odd(simulate_ar1(2 * m + 1, 0.5, seed=20 + m).x[0::2])
    gauss = GaussianConditionalCgf.from_conditioning(cond, 0.5)
    general = GeneralConditionalCgf(cond, ErrorDistribution(), 0.5)
    u0 = compute_u0(gauss).u0
    assert compute_u0(general).u0 == pytest.approx(u0, abs=1e-10)
    for u in u0 + np.array([0.02, 0.08, 0.15, 0.25]):
        if gauss.gap(u) > 0:
            a, b = conditional_tail(gauss, u).tail, conditional_tail(general, u).tail
            assert abs(a - b) <= 5e-9


def test_general_backend_below_u0_raises():
    dist = ErrorDistribution("t", 10)
    cond = OddConditioning.from_odd(simulate_ar1(19, 0.5, dist, seed=1).x[0::2])
    gc = GeneralConditionalCgf(cond, dist, 0.5)
    u0 = compute_u0(gc).u0
    with pytest.raises(SaddleError):
        conditional_tail(gc, u0 - 0.05)


def test_mixture_backend_residual():
    rng = np.random.default_rng(5)
    cond = OddConditioning.from_odd(simulate_ar1(39, 0.5, seed=5).x[0::2])
    mc = MixtureConditionalCgf(cond, rng.standard_normal(38), 0.5, 1 / 19)
    u0 = compute_u0(mc).u0
    for u in (u0 - 0.1, u0 + 0.05, u0 + 0.15):
        res = conditional_tail(mc, u)
        k10_0 = mc.evaluate(0.0, u).k10
        assert abs(mc.evaluate(res.t_hat, u).k10) <= 1e-10 * (1 + abs(k10_0))


@pytest.mark.slow
def test_conditional_tail_against_monte_carlo_m4():
    g = _gauss(9, seed=11)
    rng = np.random.default_rng(12)
    u0 = compute_u0(g).u0
    us = [u for u in u0 + np.array([0.05, 0.15, 0.3, 0.45]) if g.gap(u) > 0]
    hits = np.zeros(len(us))
    reps = 10_000_000
    for _ in range(10):
        r = conditional_r(g.conditioning, g.sample_even(rng, reps // 10))
        hits += [(r > u).sum() for u in us]
    for u, h in zip(us, hits):
        mc = TailEstimate.from_counts(int(h), reps)
        sp = conditional_tail(g, u).tail
        if mc.probability >= 0.01:
            assert abs(sp - mc.probability) <= max(3 * mc.std_error, 0.02 * sp)


# -- expected conditional tail ----------------------------------------------


def test_expected_tail_single_draw():
    model = Ar1Model(9, 0.5)
    est = expected_conditional_tail(model, 0.55, n_cond=1, seed=7)
    path = simulate_paths(9, 0.5, ErrorDistribution(), 1, stream(7, 0))[0]
    g = GaussianConditionalCgf.from_conditioning(OddConditioning.from_odd(path[0::2]), 0.5)
    assert est.probability == conditional_tail(g, 0.55).tail
    assert est.replicates == 1


def test_expected_tail_reproducible_across_workers():
    model = Ar1Model(9, 0.5)
    a = expected_conditional_tails(model, [0.4, 0.6], n_cond=4_500, seed=3, workers=1)
    b = expected_conditional_tails(model, [0.4, 0.6], n_cond=4_500, seed=3, workers=2)
    assert [x.probability for x in a] == [x.probability for x in b]
    assert [x.std_error for x in a] == [x.std_error for x in b]


def test_expected_tail_rejects_empty():
    with pytest.raises(InvalidArgument):
        expected_conditional_tail(Ar1Model(9, 0.5), 0.5, n_cond=0)


def test_expected_tail_general_backend_matches_gaussian():
    model = Ar1Model(9, 0.5)
    a = expected_conditional_tail(model, 0.7, "gaussian", n_cond=50, seed=1)
    b = expected_conditional_tail(model, 0.7, "general", n_cond=50, seed=1)
    assert abs(a.probability - b.probability) <= 1e-8


# -- critical values --------------------------------------------------------


def test_critical_value_normal_quantile():
    u = critical_value(normal_upper_tail, 0.05, 0.0, 4.0)
    assert u == pytest.approx(1.6448536269514722, abs=1e-7)


def test_critical_value_self_consistent():
    tail = lambda u: gaussian_unconditional_tail(39, 0.5, u).tail  # noqa: E731
    u = critical_value(tail, 0.05, 0.5, 0.95)
    assert abs(tail(u) - 0.05) <= 1e-6


def test_critical_value_median_symmetric_case():
    tail = lambda u: gaussian_unconditional_tail(9, 0.0, u).tail  # noqa: E731
    assert critical_value(tail, 0.5, -0.5, 0.5) == pytest.approx(0.0, abs=1e-8)


def test_critical_value_median_conditional():
    # the conditional median sits within O(1/m) of u0 because of skewness
    g = _gauss(39, seed=6)
    u0 = compute_u0(g).u0
    tail = lambda u: conditional_tail(g, u).tail  # noqa: E731
    u = critical_value(tail, 0.5, u0 - 0.2, u0 + 0.2)
    assert abs(tail(u) - 0.5) <= 1e-6
    assert abs(u - u0) < 1 / g.m


def test_critical_value_out_of_range():
    with pytest.raises(NoRootError):
        critical_value(normal_upper_tail, 0.001, 0.0, 2.0)
    with pytest.raises(InvalidArgument):
        critical_value(lambda u: u, 0.5, 0.0, 1.0)

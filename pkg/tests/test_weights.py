import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

import oracles
from wrcm.weights import (
    Family,
    InfiniteMomentError,
    MomentCache,
    WeightDomainError,
    WeightLaw,
    cdf,
    expectation_nodes,
    h_of_w,
    left_quantile_ws,
    moment,
    mu_minus,
    mu_plus,
    quantile,
    sample,
)

POLY = WeightLaw.polynomial(p=1, rho=2, b=0.5, beta=5)
STRETCHED = WeightLaw.stretched(p=1, rho=1, b=0.5, beta=5)
LAWS = [POLY, STRETCHED, WeightLaw.stretched(rho=2), WeightLaw.polynomial(rho=1, beta=3)]
W_GRID = np.geomspace(1e-6, 1e2, 61)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


# -- construction ----------------------------------------------------------


def test_left_mass_must_be_sub_probability():
    with pytest.raises(WeightDomainError):
        WeightLaw.polynomial(p=5, rho=2, b=0.5)
    with pytest.raises(WeightDomainError):
        WeightLaw.polynomial(beta=-1)
    with pytest.raises(WeightDomainError):
        WeightLaw.point_mass(0.0)


def test_family_from_string():
    law = WeightLaw("stretched_exponential_left", p=1, rho=1, b=0.5, beta=5)
    assert law.family is Family.STRETCHED_EXPONENTIAL_LEFT


# -- cdf / quantile --------------------------------------------------------


def test_cdf_examples():
    assert cdf(POLY, 0.1) == pytest.approx(0.01, rel=1e-14)
    assert cdf(POLY, 0.5) == pytest.approx(0.25, rel=1e-14)
    assert cdf(POLY, 1.0) == pytest.approx(1 - 0.75 * 2**-5, rel=1e-14)
    assert cdf(STRETCHED, 0.25) == pytest.approx(math.exp(-4), rel=1e-14)


def test_cdf_point_mass_step():
    pm = WeightLaw.point_mass(2.0)
    assert cdf(pm, 1.999) == 0.0
    assert cdf(pm, 2.0) == 1.0


def test_cdf_continuous_at_b_and_monotone():
    for law in LAWS:
        below = cdf(law, law.b * (1 - 1e-12))
        above = cdf(law, law.b * (1 + 1e-12))
        assert above - below < 1e-10
        vals = cdf(law, W_GRID)
        assert np.all(np.diff(vals) >= 0)
        assert 0 <= vals.min() and vals.max() <= 1
        assert cdf(law, 1e12) == pytest.approx(1.0, abs=1e-12)


def test_cdf_rejects_non_finite():
    with pytest.raises(WeightDomainError):
        cdf(POLY, np.inf)
    with pytest.raises(WeightDomainError):
        cdf(POLY, np.nan)


def test_quantile_examples():
    assert quantile(POLY, 1 / 2000) == pytest.approx(2000**-0.5, rel=1e-12)
    assert quantile(POLY, 1 / 2000) == pytest.approx(0.0223607, rel=1e-5)
    s2 = WeightLaw.stretched(rho=2)
    assert quantile(s2, 1 / 2000) == pytest.approx(math.log(2000) ** -0.5, rel=1e-12)
    for law in LAWS:
        assert quantile(law, float(cdf(law, law.b))) == pytest.approx(law.b, rel=1e-12)


def test_quantile_domain():
    for q in (0.0, 1.0, -0.1, 2.0):
        with pytest.raises(WeightDomainError):
            quantile(POLY, q)


def test_round_trip_grid():
    q = np.concatenate([np.geomspace(1e-6, 0.5, 40), 1 - np.geomspace(1e-6, 0.5, 40)])
    for law in LAWS:
        assert np.max(np.abs(cdf(law, quantile(law, q)) - q)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-9, max_value=1 - 1e-9))
def test_round_trip_property(q):
    for law in LAWS:
        assert abs(float(cdf(law, quantile(law, q))) - q) < 1e-12


def test_left_quantile_ws():
    assert left_quantile_ws(POLY, 1000) == pytest.approx(0.0223607, rel=1e-5)
    assert left_quantile_ws(POLY, 4000) == pytest.approx(left_quantile_ws(POLY, 1000) / 2, rel=1e-12)
    assert left_quantile_ws(STRETCHED, 1000) == pytest.approx(1 / math.log(2000), rel=1e-12)
    grid = [left_quantile_ws(STRETCHED, s) for s in np.geomspace(1, 1e8, 20)]
    assert np.all(np.diff(grid) < 0)
    with pytest.raises(WeightDomainError):
        left_quantile_ws(POLY, 0.5)


# -- sampling ---------------------------------------------------------------


def test_sample_empty_and_point_mass():
    assert sample(POLY, rng(), 0).shape == (0,)
    np.testing.assert_array_equal(sample(WeightLaw.point_mass(1.0), rng(), 3), np.ones(3))
    with pytest.raises(WeightDomainError):
        sample(POLY, rng(), -1)


@pytest.mark.parametrize("law", LAWS[:3], ids=["poly", "stretched1", "stretched2"])
def test_sample_ks(law):
    n = 10**5
    draws = sample(law, rng(11), n)
    ks = sps.kstest(draws, lambda w: cdf(law, w)).statistic
    assert ks < 1.63 / math.sqrt(n)


def test_sample_deterministic():
    np.testing.assert_array_equal(sample(POLY, rng(5), 100), sample(POLY, rng(5), 100))


# -- partial moments ---------------------------------------------------------


def test_mu1_closed_form():
    mu1 = moment(POLY, 1.0)
    assert mu1 == pytest.approx(1 / 12 + 15 / 32, rel=1e-14)
    assert mu1 == pytest.approx(oracles.closed_form_mu1_polynomial(1, 2, 0.5, 5), rel=1e-14)
    assert mu1 == pytest.approx(oracles.expect(POLY, lambda w: w), rel=1e-10)
    assert mu_plus(POLY, 1.0, 1e-12) == pytest.approx(0.552083, rel=1e-6)


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 2.0, 3.5, -0.5])
def test_moments_match_quadrature(r):
    for law in LAWS:
        if r >= law.beta:
            continue
        assert moment(law, r) == pytest.approx(oracles.expect(law, lambda w: w**r), rel=1e-9)


def test_moments_match_monte_carlo():
    n = 10**6
    for law in LAWS[:2]:
        draws = sample(law, rng(3), n)
        for r in (0.5, 1.0, 2.0):
            vals = draws**r
            se = vals.std() / math.sqrt(n)
            assert abs(vals.mean() - moment(law, r)) < 3 * se


def test_partial_moments_match_quadrature():
    for law in LAWS:
        for w in (1e-3, 0.1, 0.5, 0.7, 3.0):
            for a in (0.0, 0.5, 1.0):
                want = oracles.expect(law, lambda u: u**a, lo=w)
                assert mu_plus(law, a, w) == pytest.approx(want, rel=1e-9, abs=1e-300)
            want = oracles.expect(law, lambda u: u, hi=w)
            assert mu_minus(law, w) == pytest.approx(want, rel=1e-9, abs=1e-300)


def test_infinite_moment():
    law = WeightLaw.polynomial(beta=1.5)
    with pytest.raises(InfiniteMomentError):
        moment(law, 2.0)
    with pytest.raises(InfiniteMomentError):
        mu_plus(law, 1.5, 1.0)


def test_point_mass_functionals():
    pm = WeightLaw.point_mass(1.0)
    assert mu_plus(pm, 1.7, 0.5) == 1.0
    assert mu_minus(pm, 0.5) == 0.0
    assert h_of_w(pm, 0.0, 1.0) == 1.0


def test_mu_minus_example():
    assert mu_minus(POLY, 0.5) == pytest.approx(2 * 0.5**3 / 3, rel=1e-14)


def test_mu_minus_vanishes_below_support():
    law = WeightLaw.point_mass(2.0)
    assert mu_minus(law, 1.0) == 0.0
    # continuous law: leading order 2 w^3 / 3
    assert mu_minus(POLY, 1e-5) == pytest.approx(2e-15 / 3, rel=1e-10)


def test_h_small_weight_limit():
    w = 1e-4
    assert h_of_w(POLY, 1.0, w) / w == pytest.approx(0.552083, rel=1e-2)


@pytest.mark.parametrize("a", [0.0, 0.5, 1.0])
def test_h_matches_monte_carlo(a):
    n = 10**6
    draws = sample(POLY, rng(7), n)
    for w in (0.05, 0.5, 2.0):
        vals = np.minimum(w, draws) * np.maximum(w, draws) ** a
        se = vals.std() / math.sqrt(n)
        assert abs(vals.mean() - h_of_w(POLY, a, w)) < 3 * se


def test_h_matches_quadrature():
    for law in LAWS:
        for a in (0.0, 1.0):
            for w in (1e-3, 0.3, 2.0):
                assert h_of_w(law, a, w) == pytest.approx(oracles.h_expect(law, a, w), rel=1e-9)


# -- small-weight bounds, on a log grid of w in [1e-6, 1e2] -----------------------


@pytest.mark.parametrize("law", LAWS, ids=["poly", "stretched1", "stretched2", "poly_rho1"])
@pytest.mark.parametrize("a", [0.0, 0.5, 1.0])
def test_partial_moment_bounds(law, a):
    w = W_GRID
    F = cdf(law, w)
    mu_a = moment(law, a)
    mp = mu_plus(law, a, w)
    mm = mu_minus(law, w)
    h = h_of_w(law, a, w)
    assert np.all(mm <= w * F * (1 + 1e-12))
    # 1 - F loses ~1e-16 absolute to cancellation in the far tail
    assert np.all(w**a * (1 - F) <= mp * (1 + 1e-12) + 4e-16 * w**a)
    assert np.all(mp <= mu_a * (1 + 1e-12))
    gap = mu_a - mp
    assert np.all(np.diff(gap) >= -1e-15)
    assert gap[0] < 1e-6 * mu_a
    ratio_gap = np.abs(h / w - mu_a)
    assert np.all(np.diff(ratio_gap[w < law.b]) >= -1e-12)
    assert ratio_gap[0] < 1e-5 * mu_a
    assert np.all(h > 0)


def test_moment_cache():
    cache = MomentCache.build(POLY, 1.0, 2.0)
    assert cache.mu_a == pytest.approx(0.5520833333, rel=1e-9)
    assert cache.mu_a_alpha == pytest.approx(moment(POLY, 2.0))
    finer = MomentCache.build(POLY, 1.0, 2.0, quadrature_tol=1e-11)
    assert abs(finer.mu_a / cache.mu_a - 1) < 10 * cache.quadrature_tol
    heavy = MomentCache.build(WeightLaw.polynomial(beta=3), 1.0, 4.0)
    assert heavy.mu_a_alpha == math.inf


def test_expectation_nodes():
    for law in LAWS:
        nodes, probs = expectation_nodes(law)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert (probs * nodes).sum() == pytest.approx(moment(law, 1.0), rel=1e-10)
    nodes, probs = expectation_nodes(WeightLaw.point_mass(3.0))
    assert nodes.tolist() == [3.0] and probs.tolist() == [1.0]

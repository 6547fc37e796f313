import math
import warnings

import numpy as np
import pytest
from scipy import stats as sps

from wrcm.graph import DegreeKProcess
from wrcm.stats import (
    LowPowerWarning,
    dispersion_band,
    loglog_slope,
    poisson_gof,
    subbox_counts,
    subbox_counts_test,
    summarize_counts,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def uniform_processes(n, d=1, seed=0, lam=1.0):
    g = rng(seed)
    return [DegreeKProcess(0, g.random((g.poisson(lam), d)), np.ones(0)) for _ in range(n)]


def test_summarize_counts():
    s = summarize_counts([0, 1, 2, 1])
    assert s.mean == 1.0
    assert s.variance == pytest.approx(2 / 3)
    assert s.dispersion == pytest.approx(2 / 3)
    assert s.stderr == pytest.approx(math.sqrt(2 / 3 / 4))
    assert s.mean_z() == 0.0
    zero = summarize_counts([0, 0, 0])
    assert math.isnan(zero.dispersion) and not zero.dispersion_defined
    assert summarize_counts([1, 1]).mean_z() == 0.0
    assert summarize_counts([2, 2]).mean_z() == math.inf
    for bad in ([1], [1, -1], [0.5, 1]):
        with pytest.raises(ValueError):
            summarize_counts(bad)


def test_dispersion_band():
    lo, hi = dispersion_band(2000)
    assert hi - 1 == pytest.approx(3 * math.sqrt(2 / 1999), rel=1e-15)
    assert 1 - lo == pytest.approx(hi - 1, rel=1e-15)


def test_poisson_gof_hand_computed():
    counts = np.repeat([0, 1, 2, 3, 4], [74, 73, 37, 12, 4])
    rep = poisson_gof(counts, 1.0)
    n = len(counts)
    pmf = sps.poisson.pmf([0, 1, 2], 1.0)
    expected = n * np.array([pmf[0], pmf[1], pmf[2], 1 - pmf.sum()])
    observed = np.array([74, 73, 37, 16])
    stat = ((observed - expected) ** 2 / expected).sum()
    assert rep.pooled_bins == "0|1|2|>=3"
    assert rep.dof == 3
    assert rep.statistic == pytest.approx(stat, rel=1e-12)
    assert rep.p_value == pytest.approx(sps.chi2.sf(stat, 3), rel=1e-12)
    assert rep.passed


def test_poisson_gof_calibration():
    # p-values of true Poisson samples are roughly uniform
    ps = [poisson_gof(rng(i).poisson(1.0, 500), 1.0).p_value for i in range(200)]
    assert sps.kstest(ps, "uniform").pvalue > 0.001
    assert not poisson_gof(rng(0).poisson(2.0, 2000), 1.0).passed
    # over-dispersed counts with the right mean
    mixed = rng(1).poisson(rng(2).gamma(1.0, 1.0, 2000))
    assert not poisson_gof(mixed, 1.0).passed


def test_poisson_gof_warnings_and_errors():
    with pytest.warns(LowPowerWarning):
        poisson_gof([0, 1, 1, 2], 1.0)
    with pytest.raises(ValueError):
        poisson_gof([0, 1], 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowPowerWarning)
        tiny = poisson_gof([0, 1], 1.0)
    assert tiny.dof == 0 and math.isnan(tiny.p_value)


def test_subbox_counts_closed_cube():
    procs = [DegreeKProcess(0, np.array([[0.0], [0.249], [0.25], [1.0]]), np.ones(4))]
    np.testing.assert_array_equal(subbox_counts(procs, 4, 1), [[2, 1, 0, 1]])
    two = [DegreeKProcess(0, np.array([[0.1, 0.9], [0.6, 0.2]]), np.ones(2))]
    np.testing.assert_array_equal(subbox_counts(two, 2), [[0, 1, 1, 0]])


def test_subbox_test_accepts_poisson_and_rejects_clumps():
    good = subbox_counts_test(uniform_processes(2000), 4, 1)
    assert good.passed
    assert good.details["covariance_dof"] == 6
    g = rng(5)
    # all points of a replication in one random sub-box: strong covariance
    clumped = []
    for _ in range(2000):
        n = g.poisson(1.0)
        clumped.append(DegreeKProcess(0, (g.integers(0, 4) + g.random((n, 1))) / 4, np.ones(n)))
    assert not subbox_counts_test(clumped, 4, 1).passed
    skew = [DegreeKProcess(0, g.random((g.poisson(1.0), 1)) ** 2, np.ones(0)) for _ in range(2000)]
    assert not subbox_counts_test(skew, 4, 1).passed
    # a box that never receives a point fails outright
    empty_box = [DegreeKProcess(0, 0.75 * g.random((g.poisson(1.0), 1)), np.ones(0)) for _ in range(600)]
    rep = subbox_counts_test(empty_box, 4, 1)
    assert rep.details["degenerate_box"] and rep.p_value == 0.0
    with pytest.warns(LowPowerWarning):
        subbox_counts_test(uniform_processes(100), 4, 1)


def test_loglog_slope():
    s = np.array([1e2, 1e3, 1e4, 1e5])
    fit = loglog_slope(np.column_stack([s, 3 * s**-0.5]))
    assert fit.slope == pytest.approx(-0.5, rel=1e-12)
    assert fit.intercept == pytest.approx(math.log(3), rel=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-12)
    noisy = np.column_stack([s, s**-0.5 * np.exp([0.1, -0.1, 0.05, 0.0])])
    ref = sps.linregress(np.log(noisy[:, 0]), np.log(noisy[:, 1]))
    got = loglog_slope(noisy)
    assert got.slope == pytest.approx(ref.slope, rel=1e-12)
    assert got.stderr == pytest.approx(ref.stderr, rel=1e-10)
    for bad in ([(1, 1)] * 3, [(1, 1), (2, -1), (3, 1), (4, 1)], [(5, 1)] * 4):
        with pytest.raises(ValueError):
            loglog_slope(bad)

import io
import math

import numpy as np
import pytest

import oracles
from wrcm.connection import ConnectionSpec
from wrcm.graph import (
    CellGrid,
    DegreeKProcess,
    DegreeTable,
    GraphConfigError,
    build_degrees,
    count_degrees_capped,
    degree_k_count,
    extract_degree_k,
    planted_degree_experiment,
)
from wrcm.sampler import SeedSpec, sample_ppp
from wrcm.scaling import solve_scg, weight_for_mean_degree
from wrcm.weights import WeightLaw, h_of_w, mu_plus

POLY = WeightLaw.polynomial(p=1, rho=2, b=0.5, beta=5)

CASES = [
    # spec, d, s, v_s, R
    (ConnectionSpec(0.0, 2.0), 1, 200.0, 0.01, 0.3),
    (ConnectionSpec(0.5, 4.0), 1, 300.0, 0.005, 0.2),
    (ConnectionSpec(1.0, 1.5, "smooth_pareto"), 2, 150.0, 0.004, 0.15),
    (ConnectionSpec(0.3, 3.0), 3, 80.0, 0.01, 0.25),
]


def brute(cloud, spec, v_s, R):
    return oracles.brute_degrees(
        cloud.positions, cloud.weights, cloud.ids, cloud.edge_key,
        spec.a, spec.alpha, spec.profile.value, v_s, R,
    )


@pytest.mark.parametrize("spec, d, s, v_s, R", CASES)
def test_build_degrees_matches_all_pairs(spec, d, s, v_s, R):
    for rep in range(3):
        cloud = sample_ppp(POLY, s, d, R, SeedSpec(11, rep))
        table = build_degrees(cloud, spec, v_s, R)
        deg, edges = brute(cloud, spec, v_s, R)
        np.testing.assert_array_equal(table.degrees, deg)
        assert table.edge_count == edges


@pytest.mark.parametrize("spec, d, s, v_s, R", CASES)
def test_capped_sweep_matches_full_table(spec, d, s, v_s, R):
    cloud = sample_ppp(POLY, s, d, R, SeedSpec(12))
    full = build_degrees(cloud, spec, v_s, R).degrees
    inside = np.flatnonzero(cloud.in_cube())
    for cap in (0, 1, 3, 50):
        for sub in (None, 1, 3):
            got = count_degrees_capped(cloud, spec, v_s, R, cap, subdivisions=sub)
            np.testing.assert_array_equal(got, np.minimum(full[inside], cap + 1))
    every = count_degrees_capped(cloud, spec, v_s, R, 10**6, queries=np.arange(len(cloud)))
    np.testing.assert_array_equal(every, full)


def test_subdivisions_do_not_change_table():
    spec, d, s, v_s, R = CASES[0]
    cloud = sample_ppp(POLY, s, d, R, SeedSpec(13))
    base = build_degrees(cloud, spec, v_s, R).degrees
    for sub in (2, 5, 17):
        np.testing.assert_array_equal(build_degrees(cloud, spec, v_s, R, subdivisions=sub).degrees, base)


def test_permutation_invariance():
    spec, d, s, v_s, R = CASES[2]
    cloud = sample_ppp(POLY, s, d, R, SeedSpec(14))
    order = np.random.default_rng(0).permutation(len(cloud))
    perm = cloud.permuted(order)
    np.testing.assert_array_equal(
        build_degrees(perm, spec, v_s, R).degrees, build_degrees(cloud, spec, v_s, R).degrees[order]
    )


def test_radius_must_fit_padding():
    cloud = sample_ppp(POLY, 100.0, 1, 0.1, SeedSpec(0))
    with pytest.raises(GraphConfigError):
        build_degrees(cloud, ConnectionSpec(0.0, 2.0), 0.01, 0.2)
    with pytest.raises(GraphConfigError):
        count_degrees_capped(cloud, ConnectionSpec(0.0, 2.0), 0.01, 0.2, 0)


def test_zero_radius_and_empty_cloud():
    cloud = sample_ppp(POLY, 100.0, 1, 0.1, SeedSpec(0))
    table = build_degrees(cloud, ConnectionSpec(0.0, 2.0), 0.01, 0.0)
    assert table.edge_count == 0 and not table.degrees.any()
    empty = sample_ppp(POLY, 1e-3, 1, 0.0, SeedSpec(4))
    assert len(empty) == 0
    assert build_degrees(empty, ConnectionSpec(0.0, 2.0), 0.01, 0.0).edge_count == 0


def test_handshake_identity_enforced():
    with pytest.raises(AssertionError):
        DegreeTable(np.array([1, 0]), 1, (0.1, None))


def test_degree_k_extraction_agree():
    spec, d, s, v_s, R = CASES[1]
    cloud = sample_ppp(POLY, s, d, R, SeedSpec(15))
    table = build_degrees(cloud, spec, v_s, R)
    for k in (0, 1, 2):
        a = extract_degree_k(cloud, table, k)
        b = degree_k_count(cloud, spec, v_s, R, k)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.locations, b.locations)
        assert a.D == int((cloud.in_cube() & (table.degrees == k)).sum())
    # the degree classes partition the cube points of one graph
    total = sum(extract_degree_k(cloud, table, k).D for k in range(int(table.degrees.max()) + 1))
    assert total == int(cloud.in_cube().sum())


def test_cell_grid_offsets():
    pos = np.random.default_rng(0).random((50, 2))
    grid = CellGrid.build(pos, 0.0, 1.0, 0.1)
    assert grid.reach == 1
    half = grid.offsets(half=True)
    assert len(half) == 4
    full = grid.offsets(half=False)
    assert len(full) == 9 and (0, 0) in map(tuple, full)
    wide = CellGrid.build(pos, 0.0, 1.0, 0.3, subdivisions=3).offsets(half=False)
    gap = np.maximum(np.abs(wide) - 1, 0)
    assert np.all(np.diff((gap**2).sum(axis=1)) >= 0)
    # every point lands in the cell listed for it
    for c in range(len(grid.starts) - 1):
        members = grid.order[grid.starts[c]:grid.starts[c + 1]]
        cells = np.ravel_multi_index((pos[members] / grid.cell_size).astype(int).T, tuple(grid.shape))
        assert np.all(cells == c)


def test_degree_k_process_csv():
    proc = DegreeKProcess(0, np.array([[0.25], [0.5]]), np.array([1.0, 2.0]))
    buf = io.StringIO()
    proc.to_csv(buf)
    assert buf.getvalue().splitlines() == ["x1,weight", "0.25,1", "0.5,2"]
    assert proc.D == 2


@pytest.mark.parametrize("a", [0.0, 1.0])
def test_planted_point_degrees(a):
    spec = ConnectionSpec(a, 2.0)
    s = 500.0
    sol = solve_scg(POLY, spec, s, 0)
    w = weight_for_mean_degree(POLY, spec, sol.sigma_s, 2.0)
    res = planted_degree_experiment(POLY, spec, s, sol.v_s, w, 2000, 1, SeedSpec(21))
    for obs, want in ((res.degrees, 2.0), (res.out_degrees, sol.sigma_s * w * float(mu_plus(POLY, a, w)))):
        se = obs.std(ddof=1) / math.sqrt(len(obs))
        assert abs(obs.mean() - want) < 3 * se
    assert np.all(res.out_degrees <= res.degrees)
    assert sol.sigma_s * float(h_of_w(POLY, a, w)) == pytest.approx(2.0, rel=1e-12)


def test_planted_validation():
    spec = ConnectionSpec(0.0, 2.0)
    with pytest.raises(ValueError):
        planted_degree_experiment(POLY, spec, 100.0, 0.01, 0.0, 10, 1, SeedSpec(0))
    with pytest.raises(ValueError):
        planted_degree_experiment(POLY, spec, 100.0, 0.01, 1.0, 0, 1, SeedSpec(0))

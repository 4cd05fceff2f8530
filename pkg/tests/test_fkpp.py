import math

import numpy as np
import pytest
from scipy.special import ndtr

from lowdev.fkpp import (
    GridError,
    GridSpec,
    TestFunction,
    compute_uv_triple,
    default_grid,
    g_fields,
    solve_bbm_cdf,
    solve_cauchy,
    solve_coupled,
)
from lowdev.fkpp.feynman_kac import feynman_kac_check, midpoint_times
from lowdev.fkpp.wave import centering, extract_wave_limit, level_crossing, traveling_wave


@pytest.fixture(scope="module")
def short_triple(quad):
    mech, c = quad
    grid = default_grid(1.0, 2.0, left=10.0, right=10.0)
    times = sorted(set(np.round(midpoint_times(1.0, 50), 10)) | {0.5, 1.0, 2.0})
    u, us, v = compute_uv_triple(mech, c, TestFunction.zero(), grid, snapshot_times=times)
    return u, us, v, g_fields(u, us, v, mech, c)[0]


@pytest.mark.parametrize("args", [(0, 1, 0.05, 0.1, 1), (0, 1, 0.05, 0.01, 1.005), (0.01, 1, 0.05, 0.01, 1),
                                  (1, 0, 0.05, 0.01, 1), (0, 1, -0.05, 0.01, 1)])
def test_grid_validation(args):
    with pytest.raises(GridError):
        GridSpec(*args)


def test_grid_nodes_and_refine():
    g = GridSpec(-1.0, 1.0, 0.1, 0.01, 1.0)
    assert g.n_cells == 20 and g.n_steps == 100
    assert g.nodes[0] == pytest.approx(-0.95)
    assert g.refined().n_cells == 40


def test_test_functions():
    f = TestFunction.step(2.0, -1.0, -0.5)
    assert f(np.array([-0.7, -0.2]))[0] == 2.0 and f(np.array([-0.2]))[0] == 0.0
    assert f.sup == 2.0 and f.has_finite_weighted_moment
    with pytest.raises(ValueError):
        TestFunction.step(1.0, -1.0, 0.5)
    table = TestFunction.table([-1.0, 0.0], [1.0, 0.0])
    assert table(np.array([-0.5]))[0] == pytest.approx(0.5)
    # int_0^1 y e^{sqrt2 y} dy in closed form
    c = math.sqrt(2.0)
    exact = (1 / c - 1 / c**2) * math.exp(c) + 1 / c**2
    assert TestFunction.step(1.0, -1.0, 0.0).weighted_moment(1.0) == pytest.approx(exact, rel=1e-12)


def test_pde_bounds(short_triple, quad):
    _, c = quad
    u, us, v, gh = short_triple
    for i, t in enumerate(u.times):
        x = u.nodes(i)
        assert np.all((v.values[i] >= 0) & (v.values[i] <= 1))
        assert np.all(v.values[i] <= ndtr(x / math.sqrt(t)) + 1e-6)
        assert np.all(u.values[i] >= us.values[i])
        assert np.all(us.values[i] <= c.q / math.expm1(c.q * t) + 1e-8)
        assert np.all(gh.values[i] <= c.q * v.values[i] ** 2 + 1e-10)


def test_coupled_agrees_with_triple(short_triple, quad):
    mech, c = quad
    u, _, v, _ = short_triple
    _, v2 = solve_coupled(mech, c, TestFunction.zero(), u.grid, snapshot_times=[1.0, 2.0])
    assert np.max(np.abs(v2.values[-1] - v.values[v.index_of(2.0)])) < 1e-5


def test_u_decreases_in_time_and_space(short_triple):
    u = short_triple[0]
    row = u.values[u.index_of(1.0)]
    assert np.all(np.diff(row) <= 1e-12)


def test_grid_refinement_converges(quad):
    mech, c = quad
    vals = []
    for dx in (0.05, 0.025, 0.0125):
        g = GridSpec(-8.0, 10.0, dx, dx / 5, 1.0)
        vals.append(solve_cauchy(mech, c, TestFunction.zero(), "none", g, snapshot_times=[1.0]).at(1.0, 1.0))
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])


def test_bbm_cdf_small_time(quad):
    mech, c = quad
    g = default_grid(1.0, 0.5, left=8.0, right=8.0)
    f = solve_bbm_cdf(mech, c, g, snapshot_times=[0.5])
    x = np.array([0.0, 1.0])
    # few branchings by t = 0.5: F sits between Phi^2 and Phi
    phi = ndtr(x / math.sqrt(0.5))
    val = f.at(0.5, x)
    assert np.all(val <= phi + 1e-6) and np.all(val >= phi**2 - 1e-6)


def test_probe_outside_window(short_triple):
    with pytest.raises(GridError):
        short_triple[0].at(1.0, 1e3)


def test_feynman_kac_within_error(short_triple, quad):
    mech, c = quad
    _, us, v, gh = short_triple
    est = feynman_kac_check(mech, c, us, gh, 1.0, 0.5, 20_000, 3, n_steps=50)
    assert est.within(float(v.at(1.0, 0.5)), 3.0, 2e-3)
    assert est.flags["u1"] + est.flags["u2"] == pytest.approx(est.value)
    with pytest.raises(ValueError):
        feynman_kac_check(mech, c, us, gh, 1.0, 0.5, 10, 3, n_steps=50)


def test_wave_quadratic(quad):
    wave = traveling_wave(*quad)
    assert wave.max_residual < 1e-6
    assert np.all(np.diff(wave.w_values) < 0)
    assert wave(0.0) == pytest.approx(0.5, abs=1e-9)
    assert wave(-200.0) == pytest.approx(1.0, abs=1e-9)
    assert abs(wave.measured_left_rate / wave.decay_rate_left - 1) < 0.02


def test_wave_other_mechanisms(stable, atoms):
    for mech, c in (stable, atoms):
        wave = traveling_wave(mech, c)
        assert wave.max_residual < 1e-5
        assert np.all(np.diff(wave.w_values) < 0)


def test_wave_extraction(quad):
    mech, c = quad
    wave = traveling_wave(mech, c)
    g = default_grid(1.0, 15.0, left=10.0, right=15.0)
    u = solve_cauchy(mech, c, TestFunction.zero(), "none", g, snapshot_times=[15.0])
    est = extract_wave_limit(u, c, 1.0, 15.0)
    assert est.centre == pytest.approx(centering(1.0, 15.0))
    assert est.matched_error(wave) < 0.05
    assert level_crossing(est.z, est.values, 0.5) == pytest.approx(est.shift, abs=1e-9)

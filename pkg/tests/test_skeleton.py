import math

import numpy as np
import pytest

from lowdev.mechanism import offspring_distribution
from lowdev.skeleton import (
    SkeletonConfig,
    SkeletonError,
    TreeObservables,
    conditional_tau_sample,
    estimate_max_cdf,
    population_tail,
    simulate_observables,
    simulate_tree,
    tau_window,
    upper_envelope,
)


@pytest.fixture(scope="module")
def cfg(quad):
    mech, c = quad
    return SkeletonConfig(c, offspring_distribution(mech, c, 5), 1.0, 2.0)


def test_config_validation(cfg):
    with pytest.raises(SkeletonError):
        SkeletonConfig(cfg.consts, cfg.offspring, 1.0, 1.0, dt_path=0.5)
    with pytest.raises(SkeletonError):
        SkeletonConfig(cfg.consts, cfg.offspring, 1.0, 1.0, population_cap=10)


def test_first_branch_and_population_laws(cfg):
    forest = simulate_observables(cfg.with_horizon(1.0), 50_000, 3)
    p_no_branch = np.mean(~np.isfinite(forest.first_branch_time))
    assert abs(p_no_branch - math.exp(-1.0)) < 4 * math.sqrt(p_no_branch * (1 - p_no_branch) / 50_000)
    # binary Yule process: mean population e^{qt}
    pop = forest.population
    assert abs(pop.mean() - math.e) < 4 * pop.std() / math.sqrt(pop.size)


def test_single_tree_invariants(cfg):
    obs = simulate_tree(cfg, 0, seed=4)
    assert obs.population >= 1 and not obs.extinct_by_cap
    with pytest.raises(SkeletonError):
        TreeObservables(1.0, 0, 0.5, False)


def test_max_cdf_deterministic_and_bounded(cfg):
    a = estimate_max_cdf(cfg, 1.0, 4000, 21)
    b = estimate_max_cdf(cfg, 1.0, 4000, 21, workers=3)
    assert a == b
    assert a.value <= a.flags["envelope"] + 3 * a.std_error
    cond = estimate_max_cdf(cfg, 1.0, 4000, 21, condition_root_endpoint=True)
    assert abs(cond.value - a.value) < 3 * math.hypot(cond.std_error, a.std_error)


def test_population_tail_bound(cfg):
    est, bound = population_tail(cfg, 3, 5000, 2)
    assert est.value - 3 * est.std_error <= bound


def test_upper_envelope_monotone():
    vals = [upper_envelope(x, 2.0, 1.0, 1.0) for x in (-1.0, 0.0, 1.0, 2.0)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_tau_windows():
    lo, hi = tau_window("shallow", 0.7, math.sqrt(2), 100.0)
    assert lo < 0.3 / math.sqrt(2) * 100 < hi
    assert tau_window("deep", -1.0, math.sqrt(2), 10.0) == (7.0, 10.0)


def test_conditional_tau_deep(cfg):
    s = conditional_tau_sample(cfg.with_horizon(4.0), -1.0, 300, 5)
    assert s.regime == "deep" and s.tau.size >= 300
    assert np.all(s.tau <= s.t) and s.median_gap <= 3.0


def test_infeasible_request_refused(cfg):
    with pytest.raises(SkeletonError, match="feasibility"):
        conditional_tau_sample(cfg.with_horizon(10.0), -2.0, 10, 1)

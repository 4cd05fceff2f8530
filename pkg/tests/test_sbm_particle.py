import math

import numpy as np
import pytest

from lowdev.mechanism import BranchingMechanism, Stable
from lowdev.sbm_particle import (
    ParticleConfig,
    ParticleError,
    SupRunResult,
    estimate_extinction,
    estimate_mean_mass,
    estimate_sup_cdf,
    finite_mass_cdf,
    simulate_sbm,
)


def test_rates(quad):
    cfg = ParticleConfig(quad[0], 10, 1.0)
    assert cfg.lifetime_rate == 19 and cfg.split_probability == pytest.approx(10 / 19)
    assert cfg.ultimate_extinction == pytest.approx(9 / 10)
    assert float(cfg.survival(1e6)) == pytest.approx(1 - 9 / 10)


def test_validation(quad):
    with pytest.raises(ParticleError):
        ParticleConfig(quad[0], 1, 1.0)
    with pytest.raises(ParticleError):
        ParticleConfig(BranchingMechanism(1.0, 1.0, Stable(0.5, 1.0)), 50, 1.0)
    with pytest.raises(ParticleError):
        SupRunResult(1.0, True, 0.0)


def test_single_run(quad):
    res = simulate_sbm(ParticleConfig(quad[0], 20, 1.0, seed=3), 0)
    assert res.extinct == (res.total_mass == 0)


def test_matches_finite_mass_oracle(quad):
    mech, c = quad
    cfg = ParticleConfig(mech, 50, 1.0, seed=8)
    est = estimate_sup_cdf(cfg, 1.0, 10_000)
    assert est.within(float(finite_mass_cdf(mech, c, 50, 1.0, [1.0])[0]))


def test_mean_mass_and_extinction(quad):
    mech, _ = quad
    mass = estimate_mean_mass(ParticleConfig(mech, 50, 1.0, seed=2), 5000)
    assert mass.within(math.e)
    ext = estimate_extinction(ParticleConfig(mech, 50, 8.0, seed=2), 20_000)
    exact = (1 - float(ParticleConfig(mech, 50, 8.0).survival(8.0))) ** 50
    assert ext.within(exact)


def test_worker_determinism(quad):
    cfg = ParticleConfig(quad[0], 30, 1.0, seed=4)
    assert estimate_sup_cdf(cfg, 0.5, 3000) == estimate_sup_cdf(cfg, 0.5, 3000, workers=3)

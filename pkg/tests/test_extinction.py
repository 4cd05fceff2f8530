import numpy as np
import pytest

from lowdev.extinction import ExtinctionError, check_k_bounds, phi_k_integral, solve_k
from lowdev.mechanism import validate_hypotheses


def test_k_matches_closed_form(quad):
    curve = solve_k(*quad, 0.1, 10.0)
    exact = 1.0 / np.expm1(curve.t_nodes)
    assert np.max(np.abs(curve.k_values / exact - 1)) < 1e-6
    assert np.all(np.diff(curve.scaled) <= 0)
    assert float(curve(5.0)) == pytest.approx(1 / np.expm1(5.0), rel=1e-6)


def test_k_bounds_hold(quad, stable):
    for mech, c in (quad, stable):
        curve = solve_k(mech, c, 0.05, 8.0)
        rep = check_k_bounds(curve, validate_hypotheses(mech).power_growth_witness)
        assert rep.comparison_holds
        assert np.all(np.diff(curve.k_values) < 0)


def test_k_requires_positive_start(quad):
    with pytest.raises(ExtinctionError):
        solve_k(*quad, 0.0, 1.0)
    with pytest.raises(ExtinctionError):
        solve_k(*quad, 2.0, 1.0)


def test_phi_k_integral_finite(quad):
    # quadratic: phi(k) = 2k, k(s) = 1/(e^s - 1); integral of 2 s^eps/(e^s - 1) over (0, 1]
    from scipy.integrate import quad as integrate

    eps = 0.5
    exact = integrate(lambda s: 2 * s**eps / np.expm1(s), 0, 1)[0]
    assert phi_k_integral(*quad, 1.0, eps) == pytest.approx(exact, rel=1e-6)

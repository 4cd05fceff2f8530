import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowdev.deviation import (
    DeviationError,
    RegimeClassification,
    asymptotic_law,
    classify,
    critical_s_integral,
    exponents,
    quadratic_margin,
    gaussian_min_bound,
    gaussian_min_closed_form,
    gaussian_min_expectation,
    inequality_suite,
    rates,
    wave_integral,
)
from lowdev.fkpp.wave import traveling_wave
from lowdev.mechanism import DerivedConstants

alphas = st.floats(0.5, 4.0)
qs = st.floats(0.1, 8.0)


def test_classification(quad):
    _, c = quad
    assert classify(c, 0.7).regime == "shallow"
    assert classify(c, 1 - math.sqrt(2)).regime == "critical"
    assert classify(c, -1.0).regime == "deep"
    assert classify(c, 0.7).a_delta == pytest.approx(1 - 0.3 / math.sqrt(2))
    with pytest.raises(DeviationError):
        classify(c, 1.0)


def test_rate_examples(quad):
    rows = rates(*quad, [-1.0, 1 - math.sqrt(2), 0.5])
    r2 = math.sqrt(2)
    assert [r["regime"] for r in rows] == ["deep", "critical", "shallow"]
    assert rows[0]["rate"] == pytest.approx(2.0, abs=1e-14)
    assert rows[1]["rate"] == pytest.approx(2 * r2 * (r2 - 1), abs=1e-14)
    assert rows[2]["rate"] == pytest.approx(r2 - 1, abs=1e-14)


@given(alphas, qs, st.floats(-3.0, 0.999))
def test_rate_identities(alpha, q, delta):
    rho = math.sqrt(1 + q / alpha)
    b = 1 - rho
    shallow_b = exponents(alpha, q, rho, RegimeClassification(b, "shallow", rho))[0]
    crit = exponents(alpha, q, rho, RegimeClassification(b, "critical", rho))[0]
    deep_b = exponents(alpha, q, rho, RegimeClassification(b, "deep", rho))[0]
    assert abs(crit - shallow_b) < 1e-12 and abs(crit - deep_b) < 1e-12
    deep = exponents(alpha, q, rho, RegimeClassification(delta, "deep", rho))[0]
    shallow = exponents(alpha, q, rho, RegimeClassification(delta, "shallow", rho))[0]
    # the deep rate dominates the shallow formula everywhere, with equality only at the boundary
    assert deep - shallow == pytest.approx(alpha * (rho - 1 + delta) ** 2, abs=1e-12)


@given(alphas, qs)
def test_rate_is_continuous_and_decreasing_in_delta(alpha, q):
    rho = math.sqrt(1 + q / alpha)
    c = DerivedConstants(1.0, q, rho, math.exp(-1), 1 / math.expm1(1))
    deltas = np.linspace(-3, 0.99, 200)
    vals = [exponents(alpha, q, rho, classify(c, d))[0] for d in deltas]
    assert np.all(np.diff(vals) < 0)


@given(alphas, qs, st.floats(1e-9, 1 - 1e-9), st.floats(-5.0, 2.0))
def test_quadratic_margin_nonnegative(alpha, q, x, cc):
    rho = math.sqrt(1 + q / alpha)
    assert quadratic_margin(alpha, q, rho, x, cc) >= -1e-9 * (1 + abs(cc)) ** 2 / (1 - x)


@given(st.floats(0.05, 6.0), st.floats(0.05, 8.0))
@settings(max_examples=50)
def test_gaussian_bound(b2, extra):
    b1 = b2 + extra
    val = gaussian_min_expectation(np.array([b1]), np.array([b2]))[0]
    assert val == pytest.approx(gaussian_min_closed_form(b1, b2), rel=1e-9, abs=1e-300)
    assert val <= gaussian_min_bound(b1, b2) * (1 + 1e-12)


def test_critical_integral_gamma(quad):
    r = critical_s_integral(1.0, math.sqrt(2))
    assert r["quadrature"] == pytest.approx(r["closed_form"], rel=1e-10)


def test_wave_integral_translates(quad):
    mech, c = quad
    wave = traveling_wave(mech, c)
    mu = math.sqrt(2) * (math.sqrt(2) - 1)
    base = wave_integral(mech, c, wave)["integral"]
    moved = wave_integral(mech, c, wave, 0.4)["integral"]
    assert moved / base == pytest.approx(math.exp(-mu * 0.4), rel=1e-7)


def test_asymptotic_law_needs_inputs(quad):
    mech, c = quad
    law = asymptotic_law(c, classify(c, 0.7), None, None, mech)
    assert law.prefactor is None and "skipped" in law.diagnostics
    law = asymptotic_law(c, classify(c, -1.0), None, None, mech)
    assert law.prefactor is None and law.rate == pytest.approx(2.0)


def test_shallow_and_critical_prefactors_positive(quad):
    mech, c = quad
    wave = traveling_wave(mech, c)
    for d in (0.7, 1 - math.sqrt(2)):
        law = asymptotic_law(c, classify(c, d), wave, None, mech)
        assert law.prefactor > 0


def test_inequality_suite(quad):
    rep = inequality_suite(quad[1], quad[0], 20_000, 1)
    assert rep.quadratic_ok and rep.gaussian_ok
    assert rep.quadratic_equality_gap < 1e-12
    assert rep.gaussian_closed_form_gap < 1e-10

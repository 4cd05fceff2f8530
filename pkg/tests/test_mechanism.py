import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowdev.flows import make_flow
from lowdev.mechanism import (
    BranchingMechanism,
    DiscreteAtoms,
    MechanismError,
    Stable,
    TriState,
    big_a,
    eval_psi,
    offspring_distribution,
    skeleton_pgf,
    solve_lambda_star,
    validate_hypotheses,
)

alphas = st.floats(0.2, 5.0)
betas = st.floats(0.1, 5.0)
thetas = st.floats(0.1, 0.95)


def test_quadratic_constants(quad):
    _, c = quad
    assert c.lambda_star == pytest.approx(1.0, abs=1e-14)
    assert c.q == pytest.approx(1.0, abs=1e-14)
    assert c.rho == pytest.approx(math.sqrt(2.0), abs=1e-14)
    assert c.survival_factor == pytest.approx(1.0 / (math.e - 1.0), abs=1e-14)


@given(alphas, betas)
def test_quadratic_root_closed_form(alpha, beta):
    c = solve_lambda_star(BranchingMechanism(alpha, beta))
    assert c.lambda_star == pytest.approx(alpha / beta, rel=1e-12)
    assert c.q == pytest.approx(alpha, rel=1e-10)


@given(alphas, betas, thetas, st.floats(0.1, 3.0))
@settings(max_examples=50)
def test_root_brackets_and_convexity(alpha, beta, theta, scale):
    mech = BranchingMechanism(alpha, beta, Stable(theta, scale))
    c = solve_lambda_star(mech)
    lam = c.lambda_star * np.linspace(1e-3, 1 - 1e-6, 50)
    assert np.all(eval_psi(mech, lam) < 0)
    assert eval_psi(mech, c.lambda_star * 1.001) > 0
    assert abs(eval_psi(mech, c.lambda_star)) < 1e-9 * max(1.0, c.q * c.lambda_star)
    grid = np.linspace(0.01, 3 * c.lambda_star, 200)
    assert np.all(eval_psi(mech, grid, 2) >= 0)


@given(alphas, betas, thetas, st.floats(0.1, 3.0))
@settings(max_examples=40)
def test_a_function_nonnegative(alpha, beta, theta, scale):
    mech = BranchingMechanism(alpha, beta, Stable(theta, scale))
    c = solve_lambda_star(mech)
    lam = np.linspace(0.0, 4 * c.lambda_star, 300)
    assert np.all(big_a(c, mech, lam) >= -1e-12)
    assert big_a(c, mech, c.lambda_star) == pytest.approx(0.0, abs=1e-14)


def test_offspring_pgf_matches(stable, atoms):
    for mech, c in (stable, atoms):
        law = offspring_distribution(mech, c, 60)
        s = np.linspace(0.0, 0.9, 10)
        assert np.allclose(law.pgf(s), skeleton_pgf(mech, c, s), atol=1e-8)
        assert np.all(law.probabilities >= 0)
        assert law.probabilities.sum() + law.truncation_mass == pytest.approx(1.0, abs=1e-9)


def test_quadratic_offspring_binary(quad):
    law = offspring_distribution(*quad, 10)
    assert law.is_binary


def test_degenerate_stable_equals_quadratic():
    a = solve_lambda_star(BranchingMechanism(1.0, 0.5, Stable(1.0, 0.5)))
    b = solve_lambda_star(BranchingMechanism(1.0, 1.0))
    assert a.lambda_star == pytest.approx(b.lambda_star, rel=1e-12)


@pytest.mark.parametrize("args", [(0.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 0.0), (math.nan, 1.0)])
def test_invalid_mechanisms(args):
    with pytest.raises(MechanismError):
        BranchingMechanism(*args)


def test_invalid_levy_parts():
    with pytest.raises(MechanismError):
        Stable(1.5, 1.0)
    with pytest.raises(MechanismError):
        DiscreteAtoms([(-1.0, 1.0)])


def test_hypotheses(quad, atoms):
    assert validate_hypotheses(quad[0]).power_growth_witness == (1.0, 1.0, 1.0)
    atoms_only = BranchingMechanism(1.0, 0.0, DiscreteAtoms([(1.0, 3.0)]))
    rep = validate_hypotheses(atoms_only)
    assert rep.grey_ok is TriState.FAILS
    with pytest.raises(MechanismError):
        make_flow(atoms_only, solve_lambda_star(atoms_only))


@given(st.floats(0.0, 5.0), st.floats(1e-3, 2.0))
def test_quadratic_flow_solves_ode(u0, h):
    mech = BranchingMechanism(1.0, 1.0)
    c = solve_lambda_star(mech)
    flow = make_flow(mech, c)
    # logistic closed form for u' = u - u^2
    exact = u0 * math.exp(h) / (1 + u0 * math.expm1(h))
    assert float(flow.full(np.array([u0]), h)[0]) == pytest.approx(exact, rel=1e-10, abs=1e-14)


def test_tabulated_flow_semigroup(stable):
    flow = make_flow(*stable)
    y = np.array([0.01, 0.5, 3.0, np.inf])
    one = flow.shifted(y, 0.3)
    two = flow.shifted(flow.shifted(y, 0.1), 0.2)
    assert np.allclose(one, two, rtol=1e-7)

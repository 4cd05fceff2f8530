import pytest

from lowdev.mechanism import BranchingMechanism, DiscreteAtoms, Stable, solve_lambda_star


@pytest.fixture(scope="session")
def quad():
    mech = BranchingMechanism(1.0, 1.0)
    return mech, solve_lambda_star(mech)


@pytest.fixture(scope="session")
def stable():
    mech = BranchingMechanism(1.0, 0.5, Stable(0.5, 1.0))
    return mech, solve_lambda_star(mech)


@pytest.fixture(scope="session")
def atoms():
    mech = BranchingMechanism(2.0, 1.0, DiscreteAtoms([(1.0, 1.0), (0.5, 2.0)]))
    return mech, solve_lambda_star(mech)

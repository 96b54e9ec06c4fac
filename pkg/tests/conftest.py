import pytest

from rdcp import HazardModel, make_direction, pure_degree, two_regular
from rdcp.perturbation import PerturbationBundle, _hazard_for_bundle
from rdcp.spectral import critical_time_hat


@pytest.fixture(scope="session")
def chi2():
    return two_regular()


@pytest.fixture(scope="session")
def chi3():
    return pure_degree(3)


@pytest.fixture(scope="session")
def chi2_hazard(chi2):
    return HazardModel.build(chi2, 1.1e3)


@pytest.fixture(scope="session")
def chi3_hazard(chi3):
    return HazardModel.build(chi3, 60.0)


@pytest.fixture(scope="session")
def chi3_critical(chi3):
    return critical_time_hat(chi3, tol=1e-12)


@pytest.fixture(scope="session")
def r3_direction():
    return make_direction({3: 1.0})


@pytest.fixture(scope="session")
def accept_bundle(r3_direction):
    """The acceptance configuration: eps = 0.01, delta = 0.5, r_3 = 1."""
    return PerturbationBundle.build(r3_direction.with_epsilon(0.01), 0.5)


@pytest.fixture(scope="session")
def accept_hazard(accept_bundle):
    return _hazard_for_bundle(accept_bundle)

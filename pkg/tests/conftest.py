import numpy as np
import pytest

from horseshoe.maps import make_affine_example, make_baker


@pytest.fixture(scope="session")
def baker_half():
    return make_baker(0.5)


@pytest.fixture(scope="session")
def baker06():
    return make_baker(0.6)


@pytest.fixture(scope="session")
def baker07():
    return make_baker(0.7)


@pytest.fixture(scope="session")
def baker04():
    return make_baker(0.4)


@pytest.fixture(scope="session")
def affine():
    return make_affine_example(0.8, 0.55)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

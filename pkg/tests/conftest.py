import numpy as np
import pytest

from fabhe import ckks
from fabhe.params import SchemeParams


@pytest.fixture(scope="session")
def small_params():
    return SchemeParams(N=2 ** 10, logq=30, L=7, dnum=3, delta=2.0 ** 25)


@pytest.fixture(scope="session")
def small_keys(small_params):
    ks = ckks.keygen(small_params, 11)
    ks.add_rotations([1, 2, 5], np.random.default_rng(12), left=True)
    ks.add_rotations([3], np.random.default_rng(13))
    return ks


@pytest.fixture
def rng():
    return np.random.default_rng(2024)

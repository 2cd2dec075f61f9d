import numpy as np
import pytest

from homsim import SystemParams, build_operator_set


@pytest.fixture(scope="session")
def params_weak():
    return SystemParams.symmetric(0.25, 0.5)


@pytest.fixture(scope="session")
def ops_weak(params_weak):
    return build_operator_set(params_weak)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)


def random_sector_state(rng, dim):
    c = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return c / np.linalg.norm(c)

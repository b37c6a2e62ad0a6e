import numpy as np
import pytest

from helpers import four_state


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def net4():
    return four_state()


@pytest.fixture
def net4_rates():
    return four_state(1.0, 2.0, 3.0, 1.0, 1.5, 1.0)

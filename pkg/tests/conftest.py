import numpy as np
import pytest

import nets


@pytest.fixture
def single_net():
    return nets.make_single()


@pytest.fixture
def chain_net():
    return nets.make_chain()


@pytest.fixture
def diamond_net():
    return nets.make_diamond()


@pytest.fixture
def diamond_r3(diamond_net):
    return nets.diamond_r3(diamond_net)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

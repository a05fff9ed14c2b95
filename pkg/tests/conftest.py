import numpy as np
import pytest
import torch

from locs.simulate import gen_synthetic


@pytest.fixture(scope="session")
def small_synthetic():
    return gen_synthetic(num_scenes=8, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def t64(x):
    return torch.as_tensor(x, dtype=torch.float64)

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, k, damping=1.0):
    M = rng.standard_normal((k, k))
    return M.T @ M + damping * np.eye(k)

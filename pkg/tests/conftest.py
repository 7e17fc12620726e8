import numpy as np
import pytest

from ssanova.design import Dataset, ModelSpec


def random_instance(seed: int, n: int = 20, d: int = 2, m: int = 2, max_order: int = 2):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    y = np.sin(2 * np.pi * X[:, 0]) + X[:, -1] ** 2 + 0.3 * rng.standard_normal(n)
    return ModelSpec.full(d, max_order=max_order, m=m), Dataset.unit(X, y)


@pytest.fixture
def small_instance():
    return random_instance(7)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo checks that take minutes")

import numpy as np
import pytest

from mixgrad.basis import build_basis


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-protocol experiment runs (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def basis8():
    """N=8 components on [0, 7], unit spacing."""
    return build_basis(8, 0.0, 7.0, scale=0.5, support_pad=4.0, quad_points=4096)

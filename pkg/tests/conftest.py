import numpy as np
import pytest

from cr_transport.mesh import build_uniform_mesh


@pytest.fixture
def unit_mesh():
    return build_uniform_mesh((0.0, 1.0, 0.0, 1.0), 4)


@pytest.fixture
def two_cells():
    return build_uniform_mesh((0.0, 1.0, 0.0, 1.0), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

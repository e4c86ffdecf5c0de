import numpy as np
import pytest

from bosonlab.grid import field_from_function, make_grid, normalized
from bosonlab import nls as nls_mod


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20250810)


@pytest.fixture(scope="session")
def grid64():
    return make_grid(16.0, 64)


@pytest.fixture(scope="session")
def grid12():
    return make_grid(6.0, 12)


@pytest.fixture(scope="session")
def gauss64(grid64):
    return normalized(
        field_from_function(grid64, lambda x, y: np.exp(-(x**2 + y**2) / 2))
    )


@pytest.fixture(scope="session")
def townes():
    """Townes profile on its reference box; shared by the GN and blow-up tests."""
    grid = make_grid(40.0, 320)
    return nls_mod.townes_profile(grid)

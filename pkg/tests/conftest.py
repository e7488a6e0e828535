"""
Shared fixtures: small 2D and 3D grids and smooth random bases on them.
"""

import numpy as np
import pytest

from romforge.field_grid import Grid
from romforge.synth_fom import random_coarse_basis


@pytest.fixture
def grid_2d() -> Grid:
    return Grid.from_axes(16, 12, dx=1.0 / 15, dy=1.0 / 11)


@pytest.fixture
def grid_3d() -> Grid:
    return Grid.from_axes(10, 8, 6, dx=1.0 / 9, dy=1.0 / 7, dz=1.0 / 5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def basis_2d(grid_2d):
    return random_coarse_basis(grid_2d, 3, seed=11)


@pytest.fixture
def basis_3d(grid_3d):
    return random_coarse_basis(grid_3d, 3, seed=12)


@pytest.fixture
def make_spd(rng):
    """Random symmetric positive definite r x r matrices"""
    def make(r: int) -> np.ndarray:
        factor = rng.normal(size=(r, r))
        return factor @ factor.T + r * np.eye(r)
    return make

import numpy as np
import pytest

from bosedyn.lattice import Grid1D, PairPotential, normalize


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid2():
    return Grid1D(2, 1.0)


@pytest.fixture
def grid4():
    return Grid1D(4, 1.0)


def random_orbital(rng, grid, normalized=True):
    f = rng.normal(size=grid.M) + 1j * rng.normal(size=grid.M)
    return normalize(grid, f) if normalized else f


def smooth_potential(grid, strength=1.0):
    return PairPotential.gaussian(grid, strength, 1.0)

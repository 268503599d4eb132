import numpy as np
import pytest

from smallscat.geometry import DensityField, Domain, partition_domain, place_obstacles


@pytest.fixture(scope="session")
def sweep_sets():
    """Placements used by several modules: K = 0, t = 1/3, unit spheres, seed 1."""
    out = {}
    for a in (0.04, 0.02, 0.01):
        grid = partition_domain(Domain(), a, DensityField.constant(0.0))
        out[a] = (grid, place_obstacles(grid, a, 1 / 3, seed=1))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

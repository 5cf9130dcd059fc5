import numpy as np
import pytest

from vdns.fields import ScalarField, TorusGrid, VectorField


@pytest.fixture
def grid8():
    return TorusGrid(8, 2.0 * np.pi)


@pytest.fixture
def grid16():
    return TorusGrid(16, 2.0 * np.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_scalar(grid, rng, band_limited=True):
    values = rng.standard_normal(grid.shape)
    f = ScalarField(grid, values)
    if band_limited:
        from vdns.fields import dealias

        f = dealias(f)
    return f


def random_vector(grid, rng, band_limited=True):
    values = rng.standard_normal((3,) + grid.shape)
    v = VectorField(grid, values)
    if band_limited:
        from vdns.fields import dealias

        v = dealias(v)
    return v

"""Shared fixtures for the simulator tests."""

import math

import numpy as np
import pytest
from scipy import fft

from nematic_electrolyte.director import MINIMIZER_SQUARED
from nematic_electrolyte.fields import Grid, ScalarField, VectorField
from nematic_electrolyte.state import State


@pytest.fixture
def grid():
    return Grid(dim=2, points_per_axis=32)


@pytest.fixture
def grid3d():
    return Grid(dim=3, points_per_axis=8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def band_limited(rng):
    """Factory for random real arrays keeping only modes with every |k_j| <= kmax."""

    def make(grid, components=(), kmax=3):
        values = rng.standard_normal(tuple(components) + grid.shape)
        mask = np.ones(grid.shape, dtype=bool)
        for kj in grid.wavenumbers:
            mask &= np.abs(kj) <= kmax
        axes = tuple(range(len(components), len(components) + grid.dim))
        return fft.ifftn(fft.fftn(values, axes=axes) * mask, axes=axes).real

    return make


def minimizing_director(grid):
    direction = [0.0] * grid.dim
    direction[0] = math.sqrt(MINIMIZER_SQUARED)
    return VectorField.uniform(grid, direction)


def rest_state(grid, density=1.0):
    ones = ScalarField.constant(grid, density)
    return State(
        c_p=ones,
        c_m=ones,
        phi=ScalarField.zeros(grid),
        v=VectorField.zeros(grid),
        n=minimizing_director(grid),
    )


def taylor_green(grid):
    x = grid.coordinates()
    components = [np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])]
    components += [np.zeros(grid.shape)] * (grid.dim - 2)
    return VectorField.from_components(grid, components)


@pytest.fixture
def rest(grid):
    return rest_state(grid)

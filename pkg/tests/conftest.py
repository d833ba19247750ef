"""Shared grids and bundles for the willmore_lab test suite."""

from __future__ import annotations

import numpy as np
import pytest

from willmore_lab.field import Grid, ScalarField
from willmore_lab.geometry import build_bundle
from willmore_lab.surfaces import GaussianBump, Plane, SphereCap, sample


### Fixtures


@pytest.fixture
def unit_square() -> Grid:
    """11×11 one-sided grid on [0, 1]²."""
    return Grid(nx=11, ny=11, h=0.1)


@pytest.fixture
def periodic_grid() -> Grid:
    return Grid.periodic_square(32)


@pytest.fixture
def plane_bundle():
    return build_bundle(sample(Plane(), Grid.centered(33, 2.0)))


@pytest.fixture
def bump_bundle():
    return build_bundle(sample(GaussianBump(A=1.0), Grid.centered(97, 3.0)))


@pytest.fixture
def sphere_bundle():
    return build_bundle(sample(SphereCap(R=2.0), Grid.centered(81, 1.0)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def at_center():
    """Value at the middle sample of an odd-sized centered grid."""

    def value(f: ScalarField) -> float:
        return float(f.values[f.grid.ny // 2, f.grid.nx // 2])

    return value

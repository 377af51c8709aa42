"""Shared fixtures: the maps and labeled grids used across modules.

Session-scoped so the heavier rasters are computed once.
"""
import numpy as np
import pytest

from basin_metric_lab import grid as gd
from basin_metric_lab import maps as mc
from basin_metric_lab.maps import Chart, ComplexPoint


@pytest.fixture(scope="session")
def zsq():
    return mc.parse_map([0, 0, 1], [1])


@pytest.fixture(scope="session")
def zsq_minus_half():
    return mc.parse_map([-0.5, 0, 1], [1])


@pytest.fixture(scope="session")
def zsq_plus_one():
    return mc.parse_map([1, 0, 1], [1])


@pytest.fixture(scope="session")
def newton3():
    return mc.parse_map([1, 0, 0, 2], [0, 0, 3])


def full_grid(rmap, p, res, **kw):
    spec = gd.GridSpec(resolution=res, **kw)
    g = gd.compute_basin(rmap, p, spec)
    g = gd.label_components(g)
    return gd.boundary_distance(g)


@pytest.fixture(scope="session")
def disk_grid_256(zsq):
    """Unit-disk basin (z^2, p=0) at res 256."""
    return full_grid(zsq, ComplexPoint(0, 0, Chart.Z), 256)


@pytest.fixture(scope="session")
def disk_grid_512(zsq):
    return full_grid(zsq, ComplexPoint(0, 0, Chart.Z), 512)


@pytest.fixture(scope="session")
def cantor_grid_512(zsq_plus_one):
    """Basin of infinity of z^2+1 (Cantor dust complement) at res 512."""
    return full_grid(zsq_plus_one, ComplexPoint.infinity(), 512)


@pytest.fixture(scope="session")
def newton_grid_512(newton3):
    """Basin of the root 1 for the z^3-1 Newton map at res 512."""
    return full_grid(newton3, ComplexPoint(1, 0, Chart.Z), 512)

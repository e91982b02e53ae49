"""Shared fixtures: teach runs and maps for the two standard routes.

Session-scoped because the 1 km teach run is the expensive part of the
suite; every consumer treats the results as read-only.
"""

from __future__ import annotations

import numpy as np
import pytest

from vtrnav.perception import DescriptorField, FieldConfig
from vtrnav.sim import record_teach, standard_route_1km, standard_route_short
from vtrnav.topomap import build_map


@pytest.fixture(scope="session")
def clean_field():
    return DescriptorField(FieldConfig())


@pytest.fixture(scope="session")
def short_world():
    return standard_route_short()


@pytest.fixture(scope="session")
def short_teach(short_world, clean_field):
    return record_teach(short_world, clean_field)


@pytest.fixture(scope="session")
def short_map(short_teach):
    frames, _rows = short_teach
    return build_map(frames)


@pytest.fixture(scope="session")
def km_world():
    return standard_route_1km()


@pytest.fixture(scope="session")
def km_teach(km_world, clean_field):
    return record_teach(km_world, clean_field)


@pytest.fixture(scope="session")
def km_map(km_teach):
    frames, _rows = km_teach
    return build_map(frames)


@pytest.fixture()
def rng():
    return np.random.default_rng(7)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from furrowplan.geometry import Polygon, Polyline
from furrowplan.vehicle import VehicleParams

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def params():
    return VehicleParams()


@pytest.fixture
def square_field():
    return Polygon([[0.0, 0.0], [60.0, 0.0], [60.0, 40.0], [0.0, 40.0]])


@pytest.fixture
def straight_reference():
    return Polyline(np.array([[10.0, 20.0], [50.0, 20.0]]))


@pytest.fixture
def corner_reference():
    return Polyline(np.array([[10.0, 10.0], [45.0, 10.0], [45.0, 30.0]]))

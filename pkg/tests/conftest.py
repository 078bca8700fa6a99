import numpy as np
import pytest

from tdpam.config import preset_geometry
from tdpam.geometry import AcquisitionGeometry, build_delay_table, linear_array
from tdpam.operators import DelayOperator

MM = 1e-3


@pytest.fixture(scope="session")
def toy_geometry():
    return preset_geometry("toy")


@pytest.fixture(scope="session")
def toy_operator(toy_geometry):
    table = build_delay_table(toy_geometry)
    return DelayOperator(table, toy_geometry.grid_size, toy_geometry.num_samples)


def random_geometry(rng: np.random.Generator) -> AcquisitionGeometry:
    """Small random instance inside the dense safety bound."""
    nm = int(rng.integers(1, 5))
    nx = int(rng.integers(1, 7))
    nz = int(rng.integers(1, 9))
    nt = int(rng.integers(2, 17))
    return AcquisitionGeometry(
        sensor_positions=linear_array(nm, float(rng.uniform(0.2, 1.5)) * MM),
        grid_origin=(float(rng.uniform(-2, 0)) * MM, float(rng.uniform(0.5, 2)) * MM),
        grid_pitch=(float(rng.uniform(0.3, 1.2)) * MM, float(rng.uniform(0.3, 1.2)) * MM),
        grid_size=(nx, nz),
        speed_of_sound=1540.0,
        sampling_frequency=float(rng.uniform(1e6, 4e6)),
        num_samples=nt,
    )

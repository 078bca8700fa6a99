"""Acquisition geometry and sample-delay table.

A linear probe of ``N_m`` sensors lies on the line z = 0. The imaging grid is a
2D lateral/axial (x, z) plane below the probe, sampled at ``N_t`` temporal
samples. The integer sample delay between every sensor/pixel pair fully
determines the forward model, so the delay table is precomputed once and
shared (immutably) by the operator, the baseline beamformer, and the
simulator.

Conventions fixed here:

* Pixel flat index runs column-major over the axial dimension:
  ``n = i * N_z + j`` where ``i`` is the lateral index and ``j`` the axial
  index (axial varies fastest).
* Pixel positions are cell centers: ``r_n = (x0 + i*p_x, 0, z0 + j*p_z)``.
* Delays are rounded half away from zero and clamped to a minimum of 1 so a
  unit block shift stays well defined for degenerate geometries.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Linear-array acquisition setup: sensors, imaging grid, and sampling.

    Attributes:
        sensor_positions: (N_m, 3) array of sensor coordinates in meters,
            each of the form (x_m, 0, 0).
        grid_origin: (x0, z0) position of the first pixel center, meters.
        grid_pitch: (p_x, p_z) pixel pitch, meters.
        grid_size: (N_x, N_z) pixel counts.
        speed_of_sound: c in m/s.
        sampling_frequency: f_s in Hz.
        num_samples: N_t temporal samples of the recording.
    """

    sensor_positions: NDArray[np.float64]
    grid_origin: tuple[float, float]
    grid_pitch: tuple[float, float]
    grid_size: tuple[int, int]
    speed_of_sound: float
    sampling_frequency: float
    num_samples: int

    def __post_init__(self):
        pos = np.asarray(self.sensor_positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise InvalidInputError("sensor_positions must be an (N_m, 3) array")
        if not np.all(np.isfinite(pos)):
            raise InvalidInputError("sensor_positions must be finite")
        object.__setattr__(self, "sensor_positions", pos)
        nx, nz = self.grid_size
        if nx < 1 or nz < 1:
            raise InvalidInputError("grid_size entries must be >= 1")
        if self.num_samples < 1:
            raise InvalidInputError("num_samples must be >= 1")
        if self.speed_of_sound <= 0 or self.sampling_frequency <= 0:
            raise InvalidInputError("speed_of_sound and sampling_frequency must be > 0")
        px, pz = self.grid_pitch
        if px <= 0 or pz <= 0:
            raise InvalidInputError("grid_pitch entries must be > 0")
        if self.grid_origin[1] <= 0:
            raise InvalidInputError("grid must lie strictly below the probe line (z > 0)")

    @property
    def num_sensors(self) -> int:
        return int(self.sensor_positions.shape[0])

    @property
    def num_pixels(self) -> int:
        return self.grid_size[0] * self.grid_size[1]

    def flat_to_grid(self, n: int) -> tuple[int, int]:
        """Flat pixel index -> (lateral, axial) indices. Axial varies fastest."""
        nz = self.grid_size[1]
        return n // nz, n % nz

    def grid_to_flat(self, i: int, j: int) -> int:
        return i * self.grid_size[1] + j

    def pixel_positions(self) -> NDArray[np.float64]:
        """(N, 3) pixel-center coordinates in flat-index order."""
        nx, nz = self.grid_size
        x0, z0 = self.grid_origin
        px, pz = self.grid_pitch
        i, j = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")
        pts = np.zeros((nx * nz, 3))
        pts[:, 0] = (x0 + i * px).ravel()
        pts[:, 2] = (z0 + j * pz).ravel()
        return pts

    def fingerprint(self) -> str:
        """Deterministic hash of all geometry fields."""
        h = hashlib.sha256()
        h.update(self.sensor_positions.tobytes())
        scalars = np.array(
            [
                *self.grid_origin,
                *self.grid_pitch,
                float(self.grid_size[0]),
                float(self.grid_size[1]),
                self.speed_of_sound,
                self.sampling_frequency,
                float(self.num_samples),
            ],
            dtype=np.float64,
        )
        h.update(scalars.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class DelayTable:
    """Integer sample delays for every sensor/pixel pair.

    ``delays`` has shape (N_m, N) with N = N_x * N_z in flat pixel order.
    ``num_beyond_window`` counts entries exceeding the geometry's N_t; those
    pixels cannot contribute within the recording window.
    """

    delays: NDArray[np.int64]
    geometry_fingerprint: str
    num_beyond_window: int = field(default=0)

    def shifted(self, offset: int) -> "DelayTable":
        """Delay table re-referenced to a later time origin (window start).

        Entries become ``delay - offset + 1`` clamped to >= 1; offset 1 is the
        identity.
        """
        d = np.maximum(1, self.delays - (offset - 1))
        return DelayTable(d, self.geometry_fingerprint, self.num_beyond_window)


def compute_delay(r_m, r_n, c: float, f_s: float) -> int:
    """Integer sample delay for a wavefront traveling from r_n to sensor r_m.

    round(||r_m - r_n|| / c * f_s), half away from zero, clamped to >= 1.
    """
    if c <= 0 or f_s <= 0:
        raise InvalidInputError("c and f_s must be > 0")
    a = np.asarray(r_m, dtype=np.float64)
    b = np.asarray(r_n, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("coordinates must be finite")
    raw = math.floor(float(np.linalg.norm(a - b)) / c * f_s + 0.5)
    return max(1, raw)


def build_delay_table(geom: AcquisitionGeometry) -> DelayTable:
    """Vectorized delay table over all (sensor, pixel) pairs.

    Matches entrywise ``compute_delay`` on the pixel-center positions. Entries
    beyond N_t are permitted; their count is logged and recorded.
    """
    pix = geom.pixel_positions()  # (N, 3)
    sens = geom.sensor_positions  # (N_m, 3)
    dist = np.linalg.norm(sens[:, None, :] - pix[None, :, :], axis=2)
    delays = np.maximum(
        1, np.floor(dist / geom.speed_of_sound * geom.sampling_frequency + 0.5).astype(np.int64)
    )
    beyond = int(np.count_nonzero(delays > geom.num_samples))
    if beyond:
        logger.warning(
            "%d of %d delay entries exceed the %d-sample window",
            beyond,
            delays.size,
            geom.num_samples,
        )
    return DelayTable(delays, geom.fingerprint(), beyond)


def linear_array(num_sensors: int, pitch: float) -> NDArray[np.float64]:
    """Sensor positions for a linear array centered on x = 0 at z = 0."""
    x = (np.arange(num_sensors) - (num_sensors - 1) / 2.0) * pitch
    pos = np.zeros((num_sensors, 3))
    pos[:, 0] = x
    return pos

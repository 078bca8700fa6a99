"""Matrix-free delay forward operator and its exact adjoint.

The operator maps a spatiotemporal source cube x (N_x, N_z, N_t) to sensor
signals y (N_m, N_t). Block (m, n) of the underlying matrix is an N_t x N_t
identity with its diagonal shifted down by delta_{m,n} - 1 rows: a source at
pixel n contributes to sensor m starting at the propagation delay, sample for
sample, with unit (binary) weight. Contributions landing past N_t are
truncated.

The matrix is never stored: application groups pixels by delay per sensor and
accumulates shifted slices, which makes a forward or adjoint pass O(N * N_t)
per sensor. A dense materialization is kept only as a small-instance oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidInputError, SizeBoundExceededError
from .geometry import DelayTable

DENSE_SAFETY_BOUND = 10**8  # max entries of the materialized matrix


@dataclass
class SourceCube:
    """Spatiotemporal cavitation amplitude tensor, shape (N_x, N_z, N_t)."""

    data: NDArray[np.float64]

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3:
            raise InvalidInputError("SourceCube data must be 3D (N_x, N_z, N_t)")
        if not np.all(np.isfinite(d)):
            raise InvalidInputError("SourceCube entries must be finite")
        self.data = d

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def flatten(self) -> NDArray[np.float64]:
        """Flat vector [x_1^T ... x_N^T]: pixel-major, axial fastest."""
        return self.data.reshape(-1)

    @classmethod
    def from_flat(cls, vec, shape: tuple[int, int, int]) -> "SourceCube":
        return cls(np.asarray(vec, dtype=np.float64).reshape(shape))


@dataclass
class RfFrame:
    """Recorded sensor signals, shape (N_m, N_t), plus noise metadata."""

    data: NDArray[np.float64]
    snr_db: float | None = None
    noise_seed: int | None = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise InvalidInputError("RfFrame data must be 2D (N_m, N_t)")
        if not np.all(np.isfinite(d)):
            raise InvalidInputError("RfFrame entries must be finite")
        self.data = d

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def flatten(self) -> NDArray[np.float64]:
        return self.data.reshape(-1)

    @classmethod
    def from_flat(cls, vec, shape: tuple[int, int]) -> "RfFrame":
        return cls(np.asarray(vec, dtype=np.float64).reshape(shape))


@dataclass
class DelayOperator:
    """Delay forward operator bound to a delay table and a grid/time layout."""

    delay_table: DelayTable
    grid_size: tuple[int, int]
    num_samples: int
    _groups: list[list[tuple[int, NDArray[np.int64]]]] = field(init=False, repr=False)

    def __post_init__(self):
        nm, n = self.delay_table.delays.shape
        if n != self.grid_size[0] * self.grid_size[1]:
            raise InvalidInputError("delay table width does not match grid size")
        if self.num_samples < 1:
            raise InvalidInputError("num_samples must be >= 1")
        # Per-sensor pixel groups sharing a delay; delays beyond the window
        # are dropped here since they can never contribute.
        groups: list[list[tuple[int, NDArray[np.int64]]]] = []
        for m in range(nm):
            row = self.delay_table.delays[m]
            order = np.argsort(row, kind="stable")
            srow = row[order]
            uniq, starts = np.unique(srow, return_index=True)
            bounds = np.append(starts, len(srow))
            groups.append(
                [
                    (int(d), order[bounds[k] : bounds[k + 1]])
                    for k, d in enumerate(uniq)
                    if d <= self.num_samples
                ]
            )
        self._groups = groups

    @property
    def num_sensors(self) -> int:
        return self.delay_table.delays.shape[0]

    @property
    def num_pixels(self) -> int:
        return self.delay_table.delays.shape[1]

    @property
    def cube_shape(self) -> tuple[int, int, int]:
        return (*self.grid_size, self.num_samples)

    @property
    def frame_shape(self) -> tuple[int, int]:
        return (self.num_sensors, self.num_samples)

    # Raw-array entry points used by the solvers (no wrapper allocation).
    def forward_array(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        if x.shape != self.cube_shape:
            raise InvalidInputError(f"expected cube shape {self.cube_shape}, got {x.shape}")
        nt = self.num_samples
        xf = x.reshape(self.num_pixels, nt)
        y = np.zeros(self.frame_shape)
        for m, grp in enumerate(self._groups):
            ym = y[m]
            for d, idx in grp:
                length = nt - d + 1
                ym[d - 1 :] += xf[idx, :length].sum(axis=0)
        return y

    def adjoint_array(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        if y.shape != self.frame_shape:
            raise InvalidInputError(f"expected frame shape {self.frame_shape}, got {y.shape}")
        nt = self.num_samples
        out = np.zeros((self.num_pixels, nt))
        for m, grp in enumerate(self._groups):
            ym = y[m]
            for d, idx in grp:
                length = nt - d + 1
                out[idx, :length] += ym[d - 1 :]
        return out.reshape(self.cube_shape)


def apply_forward(op: DelayOperator, x: SourceCube) -> RfFrame:
    """y = A x: superpose delayed copies of every pixel waveform at each sensor."""
    return RfFrame(op.forward_array(x.data))


def apply_adjoint(op: DelayOperator, y: RfFrame) -> SourceCube:
    """x = A^T y: per-pixel delayed summation of the sensor traces."""
    return SourceCube(op.adjoint_array(y.data))


def materialize_dense(op: DelayOperator, safety_bound: int = DENSE_SAFETY_BOUND) -> NDArray:
    """Dense (N_m*N_t, N*N_t) matrix; oracle for small instances only."""
    nm, n = op.delay_table.delays.shape
    nt = op.num_samples
    entries = nm * nt * n * nt
    if entries > safety_bound:
        raise SizeBoundExceededError(
            f"dense operator would have {entries} entries (bound {safety_bound})"
        )
    a = np.zeros((nm * nt, n * nt))
    for m in range(nm):
        for pix in range(n):
            d = int(op.delay_table.delays[m, pix])
            if d > nt:
                continue
            block = np.eye(nt, k=-(d - 1))
            a[m * nt : (m + 1) * nt, pix * nt : (pix + 1) * nt] = block
    return a


def estimate_operator_norm(op: DelayOperator, iterations: int = 200, seed: int = 0) -> float:
    """Power iteration on A^T A; returns the Rayleigh estimate of ||A||_2^2."""
    if iterations < 1:
        raise InvalidInputError("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.cube_shape)
    nv = np.linalg.norm(v)
    if nv == 0:
        return 0.0
    v /= nv
    lam = 0.0
    for _ in range(iterations):
        w = op.adjoint_array(op.forward_array(v))
        lam = float(np.vdot(v, w).real)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return lam

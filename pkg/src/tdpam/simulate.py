"""Cavitation scene generation and RF synthesis.

Scenes are collections of point emitters (possibly off-grid) with per-event
waveforms and emission start samples. RF synthesis uses the exact same
integer delay rule as the forward operator, so an on-grid scene with
single-sample waveforms reproduces ``apply_forward`` to machine precision;
an optional linear-interpolation mode adds sub-sample arrival realism and is
excluded from that exact-consistency validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidInputError
from .geometry import AcquisitionGeometry, compute_delay
from .metrics import ZoneMasks

MM = 1e-3


@dataclass
class SourceEvent:
    """A single emitter: position (x, z) in meters, start sample (1-based),
    waveform samples, and an amplitude scale."""

    position: tuple[float, float]
    start_sample: int
    waveform: NDArray[np.float64]
    amplitude: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.waveform, dtype=np.float64)
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise InvalidInputError("waveform must be non-empty and finite")
        if self.start_sample < 1:
            raise InvalidInputError("start_sample is 1-based and must be >= 1")
        self.waveform = w


@dataclass
class Scene:
    """Emitters plus the ground-truth signal/noise zones used by the metrics."""

    events: list[SourceEvent]
    geometry: AcquisitionGeometry
    zones: ZoneMasks
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def true_positions_mm(self) -> list[tuple[float, float]]:
        return [(e.position[0] / MM, e.position[1] / MM) for e in self.events]


def _pixel_xz_mm(geom: AcquisitionGeometry):
    nx, nz = geom.grid_size
    x = (geom.grid_origin[0] + np.arange(nx) * geom.grid_pitch[0]) / MM
    z = (geom.grid_origin[1] + np.arange(nz) * geom.grid_pitch[1]) / MM
    return np.meshgrid(x, z, indexing="ij")

def _check_inside(pos_mm, geom: AcquisitionGeometry, slack_mm: float = 0.0):
    x0 = geom.grid_origin[0] / MM
    z0 = geom.grid_origin[1] / MM
    x1 = x0 + (geom.grid_size[0] - 1) * geom.grid_pitch[0] / MM
    z1 = z0 + (geom.grid_size[1] - 1) * geom.grid_pitch[1] / MM
    x, z = pos_mm
    if not (x0 - slack_mm <= x <= x1 + slack_mm and z0 - slack_mm <= z <= z1 + slack_mm):
        raise InvalidInputError(f"source at ({x}, {z}) mm lies outside the simulation region")


def make_point_scene(
    positions_mm: list[tuple[float, float]],
    geom: AcquisitionGeometry,
    waveform: NDArray[np.float64],
    seed: int = 0,
    start_sample: int = 1,
    signal_radius_mm: float = 0.5,
    noise_margin_mm: float = 2.0,
) -> Scene:
    """Point-source scene; signal zone = pixels within 0.5 mm of a source,
    noise zone = 2 mm annulus beyond it."""
    if not positions_mm:
        raise InvalidInputError("positions must be non-empty")
    for p in positions_mm:
        _check_inside(p, geom)
    events = [
        SourceEvent(position=(p[0] * MM, p[1] * MM), start_sample=start_sample, waveform=waveform)
        for p in positions_mm
    ]
    xg, zg = _pixel_xz_mm(geom)
    dist = np.full(xg.shape, np.inf)
    for p in positions_mm:
        dist = np.minimum(dist, np.hypot(xg - p[0], zg - p[1]))
    signal = dist <= signal_radius_mm
    noise = (dist <= signal_radius_mm + noise_margin_mm) & ~signal
    return Scene(
        events=events,
        geometry=geom,
        zones=ZoneMasks(signal, noise),
        kind="point",
        params={"positions_mm": list(positions_mm), "seed": seed},
    )


def make_cloud_scene(
    center_mm: tuple[float, float],
    diameter_mm: float,
    density: float,
    geom: AcquisitionGeometry,
    waveform: NDArray[np.float64],
    seed: int = 0,
    start_range: tuple[int, int] = (1, 1),
    noise_margin_mm: float = 2.0,
) -> Scene:
    """Circular cloud of round(density * pi * r^2) emitters, uniform in the disc.

    Emission start samples are drawn uniformly over ``start_range`` (inclusive)
    to mimic asynchronous cavitation bursts.
    """
    if diameter_mm <= 0 or density <= 0:
        raise InvalidInputError("diameter and density must be > 0")
    radius = diameter_mm / 2.0
    count = max(1, round(density * np.pi * radius**2))
    rng = np.random.default_rng(seed)
    rr = radius * np.sqrt(rng.uniform(size=count))
    th = rng.uniform(0.0, 2.0 * np.pi, size=count)
    starts = rng.integers(start_range[0], start_range[1] + 1, size=count)
    events = []
    for k in range(count):
        pos_mm = (center_mm[0] + rr[k] * np.cos(th[k]), center_mm[1] + rr[k] * np.sin(th[k]))
        _check_inside(pos_mm, geom, slack_mm=radius)
        events.append(
            SourceEvent(
                position=(pos_mm[0] * MM, pos_mm[1] * MM),
                start_sample=int(starts[k]),
                waveform=waveform,
            )
        )
    xg, zg = _pixel_xz_mm(geom)
    dist = np.hypot(xg - center_mm[0], zg - center_mm[1])
    signal = dist <= radius
    noise = (dist <= radius + noise_margin_mm) & ~signal
    return Scene(
        events=events,
        geometry=geom,
        zones=ZoneMasks(signal, noise),
        kind="cloud",
        params={
            "center_mm": tuple(center_mm),
            "diameter_mm": diameter_mm,
            "density": density,
            "seed": seed,
            "start_range": tuple(start_range),
        },
    )


def synthesize_rf(scene: Scene, num_samples: int, interpolate: bool = False) -> "RfFrame":
    """Noiseless RF frame: each event's waveform lands at start + delta - 1.

    ``interpolate`` splits each arrival between the two neighboring samples by
    the fractional time of flight instead of rounding it.
    """
    from .operators import RfFrame  # local import to avoid a cycle

    if num_samples < 1:
        raise InvalidInputError("num_samples must be >= 1")
    geom = scene.geometry
    y = np.zeros((geom.num_sensors, num_samples))
    for ev in scene.events:
        src = np.array([ev.position[0], 0.0, ev.position[1]])
        w = ev.amplitude * ev.waveform
        for m in range(geom.num_sensors):
            if interpolate:
                tau = (
                    float(np.linalg.norm(geom.sensor_positions[m] - src))
                    / geom.speed_of_sound
                    * geom.sampling_frequency
                )
                base = int(np.floor(tau))
                frac = tau - base
                _add_at(y[m], ev.start_sample - 1 + max(base, 1) - 1, (1.0 - frac) * w)
                _add_at(y[m], ev.start_sample - 1 + max(base + 1, 1) - 1, frac * w)
            else:
                d = compute_delay(
                    geom.sensor_positions[m], src, geom.speed_of_sound, geom.sampling_frequency
                )
                _add_at(y[m], ev.start_sample - 1 + d - 1, w)
    return RfFrame(y)


def _add_at(trace: NDArray, start: int, w: NDArray):
    nt = trace.shape[0]
    if start >= nt:
        return
    stop = min(start + w.shape[0], nt)
    trace[start:stop] += w[: stop - start]


def add_noise(y: "RfFrame", snr_db: float, seed: int) -> "RfFrame":
    """Additive zero-mean Gaussian noise at the requested SNR (dB), seeded.

    Noise variance is P_signal / 10^(snr/10) with P_signal the mean squared
    amplitude over all entries. snr_db = +inf returns the frame unchanged.
    """
    from .operators import RfFrame

    if np.isinf(snr_db) and snr_db > 0:
        return RfFrame(y.data.copy(), snr_db=snr_db, noise_seed=seed)
    power = float(np.mean(y.data**2))
    if power == 0:
        raise InvalidInputError("zero-power signal with finite SNR")
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=y.data.shape)
    return RfFrame(y.data + noise, snr_db=snr_db, noise_seed=seed)


def default_waveform(
    kind: str,
    f_s: float,
    frequency: float = 1e6,
    duration: float = 20e-6,
) -> NDArray[np.float64]:
    """Built-in emission waveforms, unit peak amplitude.

    'inertial': Gaussian-windowed 1 us broadband transient (sigma = 1/6 us).
    'non-inertial': Hann-windowed sinusoid of the given frequency/duration.
    """
    if f_s <= 0:
        raise InvalidInputError("f_s must be > 0")
    if kind == "inertial":
        length = max(1, round(f_s * 1e-6))
        t = (np.arange(length) - (length - 1) / 2.0) / f_s
        w = np.exp(-0.5 * (t / (1e-6 / 6.0)) ** 2)
    elif kind == "non-inertial":
        length = max(1, round(f_s * duration))
        t = np.arange(length) / f_s
        w = np.sin(2.0 * np.pi * frequency * t) * np.hanning(length)
    else:
        raise InvalidInputError(f"unknown waveform kind {kind!r}")
    peak = np.max(np.abs(w))
    return w / peak if peak > 0 else w

"""Experiment configuration: INI parsing, presets, and validation.

Three geometry presets are built in:

* ``toy``     — the 3x5-pixel, 3-sensor, 10-sample instance used throughout
                the test suite and for fast smoke runs.
* ``reduced`` — desk-scale preset (32 sensors, 0.4 mm pixels, 20 us window)
                sized so a full multi-replica study runs in minutes.
* ``full``    — 128 sensors, 0.2 mm pixels, the full-scale experiment layout.

The paper-style scenario definitions (two lateral sources, two axial sources,
a 2 mm cloud at 100 sources/mm^2) are attached to each preset with positions
scaled to its grid. Every value can be overridden from the INI file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .geometry import AcquisitionGeometry, linear_array

MM = 1e-3


@dataclass
class ScenarioSpec:
    point_lateral: list[tuple[float, float]]
    point_axial: list[tuple[float, float]]
    cloud_center: tuple[float, float]
    cloud_diameter_mm: float = 2.0
    cloud_density: float = 100.0


def _geom(
    num_sensors,
    sensor_pitch,
    x_range_mm,
    z_range_mm,
    pixel_pitch_mm,
    num_samples,
    c=1540.0,
    f_s=10e6,
):
    nx = round((x_range_mm[1] - x_range_mm[0]) / pixel_pitch_mm) + 1
    nz = round((z_range_mm[1] - z_range_mm[0]) / pixel_pitch_mm) + 1
    return AcquisitionGeometry(
        sensor_positions=linear_array(num_sensors, sensor_pitch),
        grid_origin=(x_range_mm[0] * MM, z_range_mm[0] * MM),
        grid_pitch=(pixel_pitch_mm * MM, pixel_pitch_mm * MM),
        grid_size=(nx, nz),
        speed_of_sound=c,
        sampling_frequency=f_s,
        num_samples=num_samples,
    )


def preset_geometry(name: str) -> AcquisitionGeometry:
    if name == "toy":
        return _geom(3, 1.0 * MM, (-1.0, 1.0), (1.0, 5.0), 1.0, 10, c=1540.0, f_s=2e6)
    if name == "reduced":
        return _geom(32, 0.3 * MM, (-8.0, 2.0), (10.0, 24.8), 0.4, 1000)
    if name == "full":
        return _geom(128, 0.3 * MM, (-15.0, 5.0), (55.0, 85.0), 0.2, 2000)
    raise ConfigError("geometry.preset", f"unknown preset {name!r}")


def preset_scenarios(name: str) -> ScenarioSpec:
    if name == "toy":
        return ScenarioSpec(
            point_lateral=[(-1.0, 3.0), (1.0, 3.0)],
            point_axial=[(0.0, 2.0), (0.0, 4.0)],
            cloud_center=(0.0, 3.0),
            cloud_diameter_mm=2.0,
            cloud_density=2.0,
        )
    if name == "reduced":
        # Cloud density is scaled down with the sensor count: a 32-element
        # aperture cannot separate hundreds of overlapping emitters.
        return ScenarioSpec(
            point_lateral=[(-4.0, 16.0), (-2.0, 16.0)],
            point_axial=[(-2.0, 14.0), (-2.0, 18.0)],
            cloud_center=(-4.0, 17.0),
            cloud_density=10.0,
        )
    if name == "full":
        return ScenarioSpec(
            point_lateral=[(-5.0, 72.0), (-3.0, 72.0)],
            point_axial=[(-3.0, 64.0), (-3.0, 72.0)],
            cloud_center=(-7.0, 70.0),
        )
    raise ConfigError("geometry.preset", f"unknown preset {name!r}")


@dataclass
class ExperimentConfig:
    geometry: AcquisitionGeometry
    scenarios: ScenarioSpec
    preset: str = "reduced"
    scenario: str = "point-lateral"
    scene_file: str | None = None
    snr_db: float = 10.0
    window_fraction: float = 0.2
    window_start: int | str = "auto"  # "auto" = earliest grid arrival
    replicas: int = 1
    base_seed: int = 0
    output_dir: str = "out"
    workers: int = 1
    methods: list[str] = field(default_factory=lambda: ["tddas", "sp"])
    waveform_kind: str = "inertial"
    waveform_frequency: float = 1e6
    waveform_duration: float = 20e-6
    interpolate: bool = False
    # solver hyperparameters (weights as fractions of ||A^T y||_inf)
    lambda_fraction: float = 0.05
    gamma_ratio: float = 0.5
    mu_ratio: float = 1.0
    rho: float = 1.0
    fista_iterations: int = 300
    admm_iterations: int = 100
    tolerance: float = 1e-5
    cg_iterations: int = 20
    cg_tolerance: float = 1e-6
    denoiser_strength: float = 1.0
    power_iterations: int = 100
    dynamic_range_db: float = 40.0
    validate_experiments: int = 100
    config_text: str = ""

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigError("experiment.replicas", "must be >= 1")
        if not (0.0 < self.window_fraction <= 1.0):
            raise ConfigError("experiment.window_fraction", "must be in (0, 1]")
        if self.scenario not in ("point-lateral", "point-axial", "cloud", "custom"):
            raise ConfigError("experiment.scenario", f"unknown scenario {self.scenario!r}")
        if self.scenario == "custom":
            if not self.scene_file:
                raise ConfigError("experiment.scene_file", "required for custom scenario")
            if not Path(self.scene_file).exists():
                raise ConfigError("experiment.scene_file", f"{self.scene_file} does not exist")
        if self.workers < 1:
            raise ConfigError("experiment.workers", "must be >= 1")
        if self.validate_experiments < 1:
            raise ConfigError("experiment.validate_experiments", "must be >= 1")
        for name in self.methods:
            if name not in ("tddas", "sp", "sptv", "spred"):
                raise ConfigError("solver.methods", f"unknown method {name!r}")

    def scenario_positions(self) -> list[tuple[float, float]]:
        if self.scenario == "point-lateral":
            return self.scenarios.point_lateral
        if self.scenario == "point-axial":
            return self.scenarios.point_axial
        raise ConfigError("experiment.scenario", "no point positions for this scenario")


VALID_KEYS = {
    "experiment": {
        "scenario",
        "scene_file",
        "snr_db",
        "window_fraction",
        "window_start",
        "replicas",
        "base_seed",
        "output_dir",
        "workers",
        "interpolate",
        "validate_experiments",
    },
    "geometry": {
        "preset",
        "speed_of_sound",
        "sampling_frequency",
        "num_samples",
        "num_sensors",
        "sensor_pitch_mm",
        "grid_x_min_mm",
        "grid_x_max_mm",
        "grid_z_min_mm",
        "grid_z_max_mm",
        "pixel_pitch_mm",
    },
    "scenario": {
        "point_lateral",
        "point_axial",
        "cloud_center",
        "cloud_diameter_mm",
        "cloud_density",
        "waveform_kind",
        "waveform_frequency",
        "waveform_duration",
    },
    "solver": {
        "methods",
        "lambda_fraction",
        "gamma_ratio",
        "mu_ratio",
        "rho",
        "fista_iterations",
        "admm_iterations",
        "tolerance",
        "cg_iterations",
        "cg_tolerance",
        "denoiser_strength",
        "power_iterations",
        "dynamic_range_db",
    },
}


def _positions(text: str) -> list[tuple[float, float]]:
    # "(-5, 72); (-3, 72)" or "-5 72; -3 72"
    out = []
    for chunk in text.replace("(", " ").replace(")", " ").split(";"):
        parts = chunk.replace(",", " ").split()
        if not parts:
            continue
        if len(parts) != 2:
            raise ConfigError("scenario.positions", f"cannot parse {chunk!r}")
        out.append((float(parts[0]), float(parts[1])))
    return out


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    return parse_config(text)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from exc
    for section in cp.sections():
        if section not in VALID_KEYS:
            raise ConfigError(section, "unknown section")
        for key in cp[section]:
            if key not in VALID_KEYS[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")

    def get(section, key, cast, default):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                if cast is bool:
                    return raw.strip().lower() in ("1", "true", "yes", "on")
                return cast(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{section}.{key}", f"invalid value {raw!r}") from exc
        return default

    preset = get("geometry", "preset", str, "reduced")
    geom = preset_geometry(preset)
    scen = preset_scenarios(preset)

    # explicit geometry overrides
    overrides = {
        k: cp.get("geometry", k)
        for k in VALID_KEYS["geometry"]
        if k != "preset" and cp.has_option("geometry", k)
    }
    if overrides:
        geom = _geom(
            get("geometry", "num_sensors", int, geom.num_sensors),
            (
                get("geometry", "sensor_pitch_mm", float, 0.0) * MM
                if "sensor_pitch_mm" in overrides
                else (
                    geom.sensor_positions[1, 0] - geom.sensor_positions[0, 0]
                    if geom.num_sensors > 1
                    else 0.3 * MM
                )
            ),
            (
                get("geometry", "grid_x_min_mm", float, geom.grid_origin[0] / MM),
                get(
                    "geometry",
                    "grid_x_max_mm",
                    float,
                    (geom.grid_origin[0] + (geom.grid_size[0] - 1) * geom.grid_pitch[0]) / MM,
                ),
            ),
            (
                get("geometry", "grid_z_min_mm", float, geom.grid_origin[1] / MM),
                get(
                    "geometry",
                    "grid_z_max_mm",
                    float,
                    (geom.grid_origin[1] + (geom.grid_size[1] - 1) * geom.grid_pitch[1]) / MM,
                ),
            ),
            get("geometry", "pixel_pitch_mm", float, geom.grid_pitch[0] / MM),
            get("geometry", "num_samples", int, geom.num_samples),
            c=get("geometry", "speed_of_sound", float, geom.speed_of_sound),
            f_s=get("geometry", "sampling_frequency", float, geom.sampling_frequency),
        )

    if cp.has_option("scenario", "point_lateral"):
        scen.point_lateral = _positions(cp.get("scenario", "point_lateral"))
    if cp.has_option("scenario", "point_axial"):
        scen.point_axial = _positions(cp.get("scenario", "point_axial"))
    if cp.has_option("scenario", "cloud_center"):
        scen.cloud_center = _positions(cp.get("scenario", "cloud_center"))[0]
    scen.cloud_diameter_mm = get("scenario", "cloud_diameter_mm", float, scen.cloud_diameter_mm)
    scen.cloud_density = get("scenario", "cloud_density", float, scen.cloud_density)

    ws_raw = get("experiment", "window_start", str, "auto")
    window_start: int | str = "auto" if ws_raw == "auto" else int(ws_raw)

    methods_raw = get("solver", "methods", str, "tddas,sp")
    methods = [m.strip() for m in methods_raw.split(",") if m.strip()]

    return ExperimentConfig(
        geometry=geom,
        scenarios=scen,
        preset=preset,
        scenario=get("experiment", "scenario", str, "point-lateral"),
        scene_file=get("experiment", "scene_file", str, None),
        snr_db=get("experiment", "snr_db", float, 10.0),
        window_fraction=get("experiment", "window_fraction", float, 0.2),
        window_start=window_start,
        replicas=get("experiment", "replicas", int, 1),
        base_seed=get("experiment", "base_seed", int, 0),
        output_dir=get("experiment", "output_dir", str, "out"),
        workers=get("experiment", "workers", int, 1),
        interpolate=get("experiment", "interpolate", bool, False),
        validate_experiments=get("experiment", "validate_experiments", int, 100),
        methods=methods,
        waveform_kind=get("scenario", "waveform_kind", str, "inertial"),
        waveform_frequency=get("scenario", "waveform_frequency", float, 1e6),
        waveform_duration=get("scenario", "waveform_duration", float, 20e-6),
        lambda_fraction=get("solver", "lambda_fraction", float, 0.05),
        gamma_ratio=get("solver", "gamma_ratio", float, 0.5),
        mu_ratio=get("solver", "mu_ratio", float, 1.0),
        rho=get("solver", "rho", float, 1.0),
        fista_iterations=get("solver", "fista_iterations", int, 300),
        admm_iterations=get("solver", "admm_iterations", int, 100),
        tolerance=get("solver", "tolerance", float, 1e-5),
        cg_iterations=get("solver", "cg_iterations", int, 20),
        cg_tolerance=get("solver", "cg_tolerance", float, 1e-6),
        denoiser_strength=get("solver", "denoiser_strength", float, 1.0),
        power_iterations=get("solver", "power_iterations", int, 100),
        dynamic_range_db=get("solver", "dynamic_range_db", float, 40.0),
        config_text=text,
    )

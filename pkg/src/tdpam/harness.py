"""Experiment pipeline: simulate -> beamform -> evaluate -> render.

Each replica lives in its own ``replica_NNN`` directory under the output
directory; a manifest at the root records every written file with a checksum.
All floating-point CSV output uses 17-significant-digit formatting so two runs
with the same config and seed produce identical text.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .das import td_das
from .errors import ConfigError, InvalidInputError, UndefinedMetricError
from .geometry import AcquisitionGeometry, build_delay_table
from .metrics import PowerMap, cnr, detect_peaks, dice, fwhm, nmse, pcid, position_error
from .operators import DelayOperator, RfFrame, SourceCube, estimate_operator_norm
from .simulate import Scene, add_noise, default_waveform, make_cloud_scene, make_point_scene, synthesize_rf
from .solvers import (
    SolverConfig,
    admm_spred_solve,
    admm_sptv_solve,
    fista_solve,
    gaussian_denoiser,
    power_map,
)
from .tensorio import Manifest, fmt_float, read_scene, read_tensor, write_scene, write_tensor

logger = logging.getLogger(__name__)

POINT_METRIC_COLUMNS = ["axial_fwhm_mm", "lateral_fwhm_mm", "position_error_mm", "pcid_db"]
CLOUD_METRIC_COLUMNS = ["cnr_db", "dice"]
DB_COLUMNS = {"pcid_db", "cnr_db"}
FLOOR_DB = -20.0


def replica_seed(base_seed: int, replica: int) -> int:
    """Replica r (1-based) gets seed base + r."""
    return base_seed + replica


def replica_dir(out: Path, replica: int) -> Path:
    return out / f"replica_{replica:03d}"


def build_scene(cfg: ExperimentConfig, seed: int) -> Scene:
    wf = default_waveform(
        cfg.waveform_kind,
        cfg.geometry.sampling_frequency,
        frequency=cfg.waveform_frequency,
        duration=cfg.waveform_duration,
    )
    wf_spec = {
        "kind": cfg.waveform_kind,
        "f_s": cfg.geometry.sampling_frequency,
        "frequency": cfg.waveform_frequency,
        "duration": cfg.waveform_duration,
    }
    if cfg.scenario == "cloud":
        # Cap start times so even the latest arrival (deepest pixel, farthest
        # sensor) still lands fully inside the analysis window.
        window = int(np.floor(cfg.window_fraction * cfg.geometry.num_samples))
        table = build_delay_table(cfg.geometry)
        spread = int(table.delays.max() - table.delays.min())
        start_max = max(1, window - wf.shape[0] + 1 - spread)
        scene = make_cloud_scene(
            cfg.scenarios.cloud_center,
            cfg.scenarios.cloud_diameter_mm,
            cfg.scenarios.cloud_density,
            cfg.geometry,
            wf,
            seed=seed,
            start_range=(1, start_max),
        )
    elif cfg.scenario == "custom":
        return read_scene(cfg.scene_file, cfg.geometry)
    else:
        scene = make_point_scene(cfg.scenario_positions(), cfg.geometry, wf, seed=seed)
    scene.params["waveform"] = wf_spec
    return scene


def cmd_simulate(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [replica_seed(cfg.base_seed, r) for r in range(1, cfg.replicas + 1)]
    manifest = Manifest(out / "manifest.json", config_text=cfg.config_text, seeds=seeds)

    def one(replica: int):
        seed = replica_seed(cfg.base_seed, replica)
        rdir = replica_dir(out, replica)
        rdir.mkdir(parents=True, exist_ok=True)
        scene = build_scene(cfg, seed)
        clean = synthesize_rf(scene, cfg.geometry.num_samples, interpolate=cfg.interpolate)
        noisy = add_noise(clean, cfg.snr_db, seed)
        write_scene(rdir / "scene.ini", scene)
        write_tensor(rdir / "rf_clean.pamt", clean.data)
        write_tensor(rdir / "rf_noisy.pamt", noisy.data)
        return [rdir / "scene.ini", rdir / "rf_clean.pamt", rdir / "rf_noisy.pamt"]

    for files in _map_replicas(one, cfg):
        for f in files:
            manifest.record(f)
    manifest.save()
    return out


def _map_replicas(fn, cfg: ExperimentConfig):
    replicas = range(1, cfg.replicas + 1)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, replicas))
    return [fn(r) for r in replicas]


def windowed(
    cfg: ExperimentConfig, geom: AcquisitionGeometry, rf: np.ndarray
) -> tuple[DelayOperator, RfFrame, int]:
    """Truncate the RF frame to the analysis window and build the matching operator.

    The window keeps floor(fraction * N_t) samples starting at ``window_start``
    (1-based); "auto" starts at the earliest arrival over the grid so deep
    grids are not cut off. Operator delays are re-referenced to the window.
    """
    table = build_delay_table(geom)
    width = int(np.floor(cfg.window_fraction * geom.num_samples))
    if cfg.window_start == "auto":
        start = int(table.delays.min())
    else:
        start = int(cfg.window_start)
        if start < 1:
            raise ConfigError("experiment.window_start", "must be >= 1 or 'auto'")
    width = min(width, geom.num_samples - start + 1)
    if width < 1:
        raise ConfigError("experiment.window_fraction", "window is empty for this start")
    y = RfFrame(rf[:, start - 1 : start - 1 + width])
    op = DelayOperator(table.shifted(start), geom.grid_size, width)
    return op, y, start


def solver_config(cfg: ExperimentConfig, op: DelayOperator, y: RfFrame) -> SolverConfig:
    aty = op.adjoint_array(y.data)
    lam = cfg.lambda_fraction * float(np.max(np.abs(aty)))
    return SolverConfig(
        lam=lam,
        gamma=cfg.gamma_ratio * lam,
        mu=cfg.mu_ratio * lam,
        rho=cfg.rho,
        max_iterations=cfg.fista_iterations,
        tolerance=cfg.tolerance,
        inner_cg_iterations=cfg.cg_iterations,
        inner_cg_tolerance=cfg.cg_tolerance,
        seed=cfg.base_seed,
    )


def run_method(cfg: ExperimentConfig, method: str, rf: np.ndarray):
    """Returns (PowerMap, SolveReport | None) for one method on one frame."""
    geom = cfg.geometry
    op, y, _ = windowed(cfg, geom, rf)
    if method == "tddas":
        return td_das(y, op.delay_table, geom), None
    scfg = solver_config(cfg, op, y)
    if method == "sp":
        report = fista_solve(
            op, y, scfg, lipschitz=estimate_operator_norm(op, cfg.power_iterations, scfg.seed)
        )
    elif method == "sptv":
        scfg.max_iterations = cfg.admm_iterations
        report = admm_sptv_solve(op, y, scfg)
    elif method == "spred":
        scfg.max_iterations = cfg.admm_iterations
        report = admm_spred_solve(op, y, scfg, gaussian_denoiser(cfg.denoiser_strength))
    else:
        raise ConfigError("method", f"unknown method {method!r}")
    return power_map(report.estimate, geom), report


def cmd_beamform(cfg: ExperimentConfig, method: str) -> Path:
    out = Path(cfg.output_dir)
    manifest = Manifest(out / "manifest.json", config_text=cfg.config_text)

    def one(replica: int):
        rdir = replica_dir(out, replica)
        rf_path = rdir / "rf_noisy.pamt"
        if not rf_path.exists():
            raise FileNotFoundError(f"missing RF input {rf_path}; run simulate first")
        rf = read_tensor(rf_path)
        pmap, report = run_method(cfg, method, rf)
        files = []
        map_path = rdir / f"map_{method}.pamt"
        write_tensor(map_path, pmap.data)
        files.append(map_path)
        csv_path = rdir / f"map_{method}.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in pmap.data:
                writer.writerow([fmt_float(v) for v in row])
        files.append(csv_path)
        trace_path = rdir / f"trace_{method}.csv"
        _write_trace(trace_path, report)
        files.append(trace_path)
        pgm_path = rdir / f"map_{method}.pgm"
        render_pgm(pmap.data, cfg.dynamic_range_db, pgm_path)
        files.append(pgm_path)
        return files

    for files in _map_replicas(one, cfg):
        for f in files:
            manifest.record(f)
    manifest.save()
    return out


def _write_trace(path, report):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if report is None:
            writer.writerow(["iteration", "objective"])
            return
        primal = report.extras.get("primal_residuals")
        dual = report.extras.get("dual_residuals")
        if primal is not None:
            writer.writerow(["iteration", "objective", "primal_residual", "dual_residual"])
            for k, obj in enumerate(report.objective_trace):
                writer.writerow([k + 1, fmt_float(obj), fmt_float(primal[k]), fmt_float(dual[k])])
        else:
            writer.writerow(["iteration", "objective"])
            for k, obj in enumerate(report.objective_trace):
                writer.writerow([k + 1, fmt_float(obj)])


def render_pgm(map_data: np.ndarray, dynamic_range_db: float, path) -> None:
    """16-bit grayscale PGM of the dB-normalized power map.

    v = round_half_up(65535 * max(0, 1 + dB/range)), dB = 10 log10(p / p_max).
    """
    mx = float(np.max(map_data))
    if mx <= 0:
        values = np.zeros(map_data.shape, dtype=np.uint16)
    else:
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10(map_data / mx)
        scaled = 65535.0 * np.maximum(0.0, 1.0 + db / dynamic_range_db)
        values = np.floor(scaled + 0.5).astype(np.uint16)
    img = values.T  # rows = axial, columns = lateral
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode()
    Path(path).write_bytes(header + img.astype(">u2").tobytes())


def point_metrics(pmap: PowerMap, scene: Scene) -> dict[str, float]:
    truths = scene.true_positions_mm()
    k = len(truths)
    row: dict[str, float] = {}
    peaks = detect_peaks(pmap, k)
    ax = [fwhm(pmap, p, "axial").width_mm for p in peaks]
    lat = [fwhm(pmap, p, "lateral").width_mm for p in peaks]
    row["axial_fwhm_mm"] = float(np.mean(ax))
    row["lateral_fwhm_mm"] = float(np.mean(lat))
    row["position_error_mm"] = position_error(truths, pmap, k)
    if k >= 2:
        row["pcid_db"] = pcid(pmap, peaks[0], peaks[1])
    return row


def cloud_metrics(pmap: PowerMap, scene: Scene) -> dict[str, float]:
    return {"cnr_db": cnr(pmap, scene.zones), "dice": dice(pmap, scene.zones)}


def cmd_evaluate(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    manifest = Manifest(out / "manifest.json", config_text=cfg.config_text)
    is_cloud = cfg.scenario == "cloud"
    columns = CLOUD_METRIC_COLUMNS if is_cloud else POINT_METRIC_COLUMNS
    rows = []
    any_map = False
    for replica in range(1, cfg.replicas + 1):
        rdir = replica_dir(out, replica)
        scene_path = rdir / "scene.ini"
        if not scene_path.exists():
            raise ConfigError("experiment", f"missing ground truth {scene_path}")
        scene = read_scene(scene_path, cfg.geometry)
        for method in cfg.methods:
            map_path = rdir / f"map_{method}.pamt"
            if not map_path.exists():
                continue
            any_map = True
            pmap = PowerMap(
                read_tensor(map_path), origin=cfg.geometry.grid_origin, pitch=cfg.geometry.grid_pitch
            )
            try:
                vals = cloud_metrics(pmap, scene) if is_cloud else point_metrics(pmap, scene)
            except UndefinedMetricError as exc:
                logger.warning("replica %d method %s: %s", replica, method, exc)
                vals = {}
            rows.append(
                {
                    "scenario": cfg.scenario,
                    "method": method,
                    "replica": replica,
                    "seed": replica_seed(cfg.base_seed, replica),
                    **vals,
                }
            )
    if not any_map:
        raise ConfigError("experiment", "no power maps found; run beamform first")

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "method", "replica", "seed", *columns])
        for row in rows:
            writer.writerow(
                [row["scenario"], row["method"], row["replica"], row["seed"]]
                + [fmt_float(row[c]) if c in row else "" for c in columns]
            )
    manifest.record(metrics_path)

    agg_path = out / "aggregate.txt"
    with open(agg_path, "w") as fh:
        fh.write("method\t" + "\t".join(columns) + "\n")
        for method in cfg.methods:
            cells = []
            for col in columns:
                vals = [row[col] for row in rows if row["method"] == method and col in row]
                cells.append(aggregate_cell(vals, col in DB_COLUMNS))
            fh.write(method + "\t" + "\t".join(cells) + "\n")
    manifest.record(agg_path)
    manifest.save()
    return out


def aggregate_cell(values: list[float], is_db: bool) -> str:
    """mean (population std) formatted like the result tables; dB metrics below
    the -20 dB floor render as '<-20'."""
    if not values:
        return "n/a"
    arr = np.asarray(values, dtype=np.float64)
    if is_db and (not np.all(np.isfinite(arr)) or arr.mean() < FLOOR_DB):
        return "<-20"
    return f"{arr.mean():.1f} ({arr.std():.1f})"


def cmd_validate_forward(cfg: ExperimentConfig, experiments: int | None = None):
    """NMSE between synthesize_rf and apply_forward over random on-grid scenes.

    Returns (mean, std, worst_seed). Refuses when interpolation mode is on,
    since sub-sample arrivals are excluded from the exact-consistency check.
    """
    if cfg.interpolate:
        raise ConfigError(
            "experiment.interpolate", "forward validation requires the exact delay mode"
        )
    n_exp = experiments if experiments is not None else cfg.validate_experiments
    if n_exp < 1:
        raise ConfigError("experiment.validate_experiments", "must be >= 1")
    geom = cfg.geometry
    table = build_delay_table(geom)
    op = DelayOperator(table, geom.grid_size, geom.num_samples)
    errors = []
    worst = (0.0, -1)
    for k in range(n_exp):
        seed = cfg.base_seed + k
        rng = np.random.default_rng(seed)
        n_src = int(rng.integers(1, 6))
        cube = np.zeros((*geom.grid_size, geom.num_samples))
        events = []
        for _ in range(n_src):
            i = int(rng.integers(0, geom.grid_size[0]))
            j = int(rng.integers(0, geom.grid_size[1]))
            t = int(rng.integers(0, geom.num_samples))
            amp = float(rng.uniform(0.5, 2.0))
            cube[i, j, t] += amp
            x_mm = (geom.grid_origin[0] + i * geom.grid_pitch[0]) / 1e-3
            z_mm = (geom.grid_origin[1] + j * geom.grid_pitch[1]) / 1e-3
            events.append((x_mm, z_mm, t + 1, amp))
        scene = make_point_scene(
            [(e[0], e[1]) for e in events], geom, np.array([1.0]), seed=seed
        )
        for ev, (_, _, start, amp) in zip(scene.events, events):
            ev.start_sample = start
            ev.amplitude = amp
        y_sim = synthesize_rf(scene, geom.num_samples)
        y_op = op.forward_array(cube)
        if float(np.sum(y_sim.data**2)) == 0:
            continue
        err = nmse(y_sim.data, y_op)
        errors.append(err)
        if err > worst[0]:
            worst = (err, seed)
    arr = np.asarray(errors)
    return float(arr.mean()), float(arr.std()), worst[1]


def cmd_run_all(cfg: ExperimentConfig) -> Path:
    out = cmd_simulate(cfg)
    for method in cfg.methods:
        cmd_beamform(cfg, method)
    cmd_evaluate(cfg)
    return out

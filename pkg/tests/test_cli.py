"""End-to-end CLI tests on the tiny preset (3 sensors, 3x5 grid)."""

import struct

import numpy as np
import pytest

from tdpam.cli import main
from tdpam.tensorio import read_tensor, sha256_file, write_tensor

TOY_CONFIG = """\
[experiment]
scenario = point-lateral
snr_db = 20
window_fraction = 1.0
replicas = 2
base_seed = 5
output_dir = {out}

[geometry]
preset = toy

[solver]
methods = tddas
fista_iterations = 50
"""


def write_config(tmp_path, text=None, name="exp.ini", out=None):
    cfg = tmp_path / name
    cfg.write_text((text or TOY_CONFIG).format(out=out or tmp_path / "run"))
    return cfg


def read_pgm(path):
    raw = path.read_bytes()
    header, _, rest = raw.partition(b"65535\n")
    parts = header.split()
    assert parts[0] == b"P5"
    w, h = int(parts[1]), int(parts[2])
    vals = struct.unpack(f">{w * h}H", rest)
    return np.array(vals).reshape(h, w)


def test_full_pipeline(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert (out / "replica_001" / "rf_noisy.pamt").exists()
    assert (out / "replica_002" / "scene.ini").exists()
    assert (out / "manifest.json").exists()
    assert main(["beamform", "--config", str(cfg), "--method", "tddas"]) == 0
    assert (out / "replica_001" / "map_tddas.pamt").exists()
    assert (out / "replica_001" / "map_tddas.pgm").exists()
    assert main(["evaluate", "--config", str(cfg)]) == 0
    metrics = (out / "metrics.csv").read_text().splitlines()
    assert metrics[0].startswith("scenario,method,replica,seed")
    assert len(metrics) == 3  # header + 2 replicas
    assert (out / "aggregate.txt").read_text().startswith("method\t")


def test_run_all_and_determinism(tmp_path):
    cfg_a = write_config(tmp_path, name="a.ini", out=tmp_path / "run_a")
    cfg_b = write_config(tmp_path, name="b.ini", out=tmp_path / "run_b")
    assert main(["run-all", "--config", str(cfg_a)]) == 0
    assert main(["run-all", "--config", str(cfg_b)]) == 0
    for rel in (
        "replica_001/rf_noisy.pamt",
        "replica_001/map_tddas.pamt",
        "replica_001/map_tddas.csv",
        "metrics.csv",
    ):
        assert sha256_file(tmp_path / "run_a" / rel) == sha256_file(tmp_path / "run_b" / rel), rel


def test_replica_seeds_differ(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == 0
    a = read_tensor(tmp_path / "run" / "replica_001" / "rf_noisy.pamt")
    b = read_tensor(tmp_path / "run" / "replica_002" / "rf_noisy.pamt")
    assert not np.array_equal(a, b)


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nsnr_db = loud\n")
    assert main(["simulate", "--config", str(bad)]) == 1
    unknown = tmp_path / "unknown.ini"
    unknown.write_text("[experiment]\nvolume = 11\n")
    assert main(["simulate", "--config", str(unknown)]) == 1


def test_missing_input_exit_code(tmp_path):
    cfg = write_config(tmp_path)
    # beamform without simulate: missing RF input -> I/O error
    assert main(["beamform", "--config", str(cfg), "--method", "tddas"]) == 2
    assert main(["simulate", "--config", str(tmp_path / "nope.ini")]) == 2


def test_validate_forward_passes(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["validate-forward", "--config", str(cfg), "--experiments", "25"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_render_reference_values(tmp_path, capsys):
    tensor = tmp_path / "map.pamt"
    write_tensor(tensor, np.array([[1.0], [0.1], [0.01], [0.0]]))
    out = tmp_path / "map.pgm"
    assert main(["render", str(tensor), "--range", "40", "--out", str(out)]) == 0
    img = read_pgm(out)
    assert img.shape == (1, 4)  # rows = axial, columns = lateral
    assert list(img[0]) == [65535, 49151, 32768, 0]


def test_render_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.pamt"
    bad.write_bytes(b"not a tensor")
    assert main(["render", str(bad), "--out", str(tmp_path / "x.pgm")]) == 2


def test_sp_trace_matches_golden(tmp_path):
    """Regression lock: the Sp objective trace on the tiny preset is frozen."""
    import csv
    from pathlib import Path

    text = TOY_CONFIG.replace("methods = tddas", "methods = sp\nlambda_fraction = 0.05")
    text = text.replace("replicas = 2", "replicas = 1").replace("fista_iterations = 50", "fista_iterations = 300")
    cfgfile = tmp_path / "exp.ini"
    cfgfile.write_text(text.format(out=tmp_path / "run"))
    assert main(["simulate", "--config", str(cfgfile)]) == 0
    assert main(["beamform", "--config", str(cfgfile), "--method", "sp"]) == 0

    def load(path):
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        return [float(r["objective"]) for r in rows]

    got = load(tmp_path / "run" / "replica_001" / "trace_sp.csv")
    want = load(Path(__file__).parent / "data" / "golden_sp_trace.csv")
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert abs(g - w) <= 1e-9 * max(abs(w), 1.0)


def test_cli_overrides(tmp_path):
    cfg = write_config(tmp_path)
    alt = tmp_path / "alt"
    assert main(["simulate", "--config", str(cfg), "--replicas", "1", "--out", str(alt)]) == 0
    assert (alt / "replica_001").exists()
    assert not (alt / "replica_002").exists()

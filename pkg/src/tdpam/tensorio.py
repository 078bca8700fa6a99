"""File formats: PAMT binary tensors, scene text files, run manifests.

PAMT layout (little-endian):
    magic   4 bytes  b"PAMT"
    version u32      currently 1
    ndim    u32
    dims    u64 * ndim
    dtype   u32      1 = float64, 2 = int64
    payload row-major

Scene files are human-readable INI text (positions, waveform spec, seed) so
experiments can be replayed. Manifests are sorted JSON with sha256 checksums
of every file a run writes.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidInputError
from .geometry import AcquisitionGeometry
from .simulate import Scene, SourceEvent, default_waveform, make_cloud_scene, make_point_scene

MAGIC = b"PAMT"
VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {np.dtype("float64"): 1, np.dtype("int64"): 2}

TOOL_VERSION = "tdpam 0.1.0"


def write_tensor(path, array: NDArray) -> None:
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _CODES:
        if np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        elif np.issubdtype(arr.dtype, np.integer):
            arr = arr.astype(np.int64)
        else:
            raise InvalidInputError(f"unsupported tensor dtype {arr.dtype}")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    buf.write(struct.pack("<I", _CODES[arr.dtype]))
    buf.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_tensor(path) -> NDArray:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise InvalidInputError(f"{path}: not a PAMT tensor file")
    version, ndim = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise InvalidInputError(f"{path}: unsupported PAMT version {version}")
    offset = 12
    dims = struct.unpack_from(f"<{ndim}Q", raw, offset)
    offset += 8 * ndim
    (code,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if code not in _DTYPES:
        raise InvalidInputError(f"{path}: unknown dtype code {code}")
    dt = _DTYPES[code]
    count = int(np.prod(dims)) if dims else 1
    expected = offset + count * dt.itemsize
    if len(raw) != expected:
        raise InvalidInputError(f"{path}: truncated payload")
    return np.frombuffer(raw, dtype=dt, count=count, offset=offset).reshape(dims).copy()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def fmt_float(v: float) -> str:
    """Fixed 17-significant-digit text for reproducible CSV output."""
    return format(float(v), ".17g")


def write_scene(path, scene: Scene) -> None:
    cp = configparser.ConfigParser()
    cp["scene"] = {"kind": scene.kind}
    for key, val in scene.params.items():
        cp["scene"][key] = json.dumps(val if not isinstance(val, tuple) else list(val))
    wf = scene.params.get("waveform", {})
    cp["waveform"] = {k: str(v) for k, v in wf.items()}
    cp["sources"] = {
        "count": str(len(scene.events)),
    }
    lines = []
    for ev in scene.events:
        lines.append(
            f"{fmt_float(ev.position[0] / 1e-3)} {fmt_float(ev.position[1] / 1e-3)} "
            f"{ev.start_sample} {fmt_float(ev.amplitude)}"
        )
    with open(path, "w") as fh:
        cp.write(fh)
        fh.write("# x_mm z_mm start_sample amplitude\n")
        for line in lines:
            fh.write(line + "\n")


def read_scene(path, geom: AcquisitionGeometry) -> Scene:
    text = Path(path).read_text()
    ini_part, _, tail = text.partition("# x_mm z_mm start_sample amplitude\n")
    cp = configparser.ConfigParser()
    cp.read_string(ini_part)
    kind = cp["scene"]["kind"]
    params = {
        k: json.loads(v) for k, v in cp["scene"].items() if k not in ("kind",)
    }
    wf_spec = dict(cp["waveform"]) if cp.has_section("waveform") else {}
    if wf_spec:
        waveform = default_waveform(
            wf_spec.get("kind", "inertial"),
            float(wf_spec["f_s"]),
            frequency=float(wf_spec.get("frequency", 1e6)),
            duration=float(wf_spec.get("duration", 20e-6)),
        )
    else:
        waveform = np.array([1.0])
    params["waveform"] = wf_spec
    if kind == "point":
        scene = make_point_scene(
            [tuple(p) for p in params["positions_mm"]],
            geom,
            waveform,
            seed=int(params.get("seed", 0)),
        )
    elif kind == "cloud":
        scene = make_cloud_scene(
            tuple(params["center_mm"]),
            float(params["diameter_mm"]),
            float(params["density"]),
            geom,
            waveform,
            seed=int(params.get("seed", 0)),
            start_range=tuple(params.get("start_range", (1, 1))),
        )
    else:
        raise InvalidInputError(f"{path}: unknown scene kind {kind!r}")
    # Rebuild from parameters, then overwrite events with the stored list so a
    # hand-edited file stays authoritative.
    events = []
    for line in tail.strip().splitlines():
        if not line or line.startswith("#"):
            continue
        xs, zs, ss, amps = line.split()
        events.append(
            SourceEvent(
                position=(float(xs) * 1e-3, float(zs) * 1e-3),
                start_sample=int(ss),
                waveform=waveform,
                amplitude=float(amps),
            )
        )
    scene.events = events
    scene.params = params
    return scene


class Manifest:
    """Run manifest: config snapshot, per-replica seeds, file checksums."""

    def __init__(self, path, config_text: str = "", seeds: list[int] | None = None):
        self.path = Path(path)
        if self.path.exists():
            data = json.loads(self.path.read_text())
        else:
            data = {
                "tool_version": TOOL_VERSION,
                "config": config_text,
                "replica_seeds": seeds or [],
                "files": {},
            }
        if config_text:
            data["config"] = config_text
        if seeds is not None:
            data["replica_seeds"] = seeds
        self.data = data

    def record(self, file_path) -> None:
        rel = str(Path(file_path).resolve().relative_to(self.path.parent.resolve()))
        self.data["files"][rel] = sha256_file(file_path)

    def save(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

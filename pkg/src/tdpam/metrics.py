"""Evaluation metrics: FWHM, position error, PCID, CNR, Dice, NMSE.

All dB metrics are ratios, hence invariant to uniform positive scaling of the
map. Power maps are treated directly as the displayed quantity (no separate
envelope detection). Variance convention everywhere: population (1/N).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidInputError, UndefinedMetricError


@dataclass
class PowerMap:
    """2D map of temporally integrated squared amplitude, with grid metadata.

    ``origin`` and ``pitch`` are in meters ((x0, z0) and (p_x, p_z)); they are
    required by the geometric metrics (FWHM, position error).
    """

    data: NDArray[np.float64]
    origin: tuple[float, float] | None = None
    pitch: tuple[float, float] | None = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise InvalidInputError("PowerMap data must be 2D (N_x, N_z)")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise InvalidInputError("PowerMap entries must be finite and >= 0")
        self.data = d

    def pixel_mm(self, i: int | float, j: int | float) -> tuple[float, float]:
        """Pixel indices -> (x, z) position in millimeters."""
        if self.origin is None or self.pitch is None:
            raise UndefinedMetricError("PowerMap lacks grid metadata")
        return (
            (self.origin[0] + i * self.pitch[0]) * 1e3,
            (self.origin[1] + j * self.pitch[1]) * 1e3,
        )


@dataclass
class ZoneMasks:
    """Disjoint boolean signal/noise zones over the (N_x, N_z) grid."""

    signal_mask: NDArray[np.bool_]
    noise_mask: NDArray[np.bool_]

    def __post_init__(self):
        s = np.asarray(self.signal_mask, dtype=bool)
        n = np.asarray(self.noise_mask, dtype=bool)
        if s.shape != n.shape:
            raise InvalidInputError("zone masks must share a shape")
        if np.any(s & n):
            raise InvalidInputError("signal and noise zones must be disjoint")
        self.signal_mask = s
        self.noise_mask = n


class FwhmResult(NamedTuple):
    width_mm: float
    truncated: bool


def _half_crossing(profile: NDArray, peak_idx: int, half: float, step: int) -> tuple[float, bool]:
    """Fractional index offset from peak to the half-maximum crossing.

    Walks from the peak in direction ``step`` (+1/-1); linear interpolation
    between the bracketing samples. Returns (offset, truncated).
    """
    idx = peak_idx
    while True:
        nxt = idx + step
        if nxt < 0 or nxt >= len(profile):
            return abs(idx - peak_idx), True  # ran off the map edge
        if profile[nxt] < half:
            frac = (profile[idx] - half) / (profile[idx] - profile[nxt])
            return abs(idx - peak_idx) + frac, False
        idx = nxt


def fwhm(pmap: PowerMap, peak: tuple[int, int], axis: str) -> FwhmResult:
    """Full width at half maximum through ``peak`` along 'lateral' or 'axial'.

    Crossings are found by linear interpolation; a side that never drops below
    half maximum contributes the distance to the map edge and sets the
    truncation flag.
    """
    if pmap.pitch is None:
        raise UndefinedMetricError("PowerMap lacks grid metadata")
    i, j = peak
    if axis == "lateral":
        profile = pmap.data[:, j]
        peak_idx = i
        pitch_mm = pmap.pitch[0] * 1e3
    elif axis == "axial":
        profile = pmap.data[i, :]
        peak_idx = j
        pitch_mm = pmap.pitch[1] * 1e3
    else:
        raise InvalidInputError("axis must be 'lateral' or 'axial'")
    v = profile[peak_idx]
    if v <= 0:
        raise UndefinedMetricError("peak value is zero")
    half = v / 2.0
    left, ltrunc = _half_crossing(profile, peak_idx, half, -1)
    right, rtrunc = _half_crossing(profile, peak_idx, half, +1)
    return FwhmResult((left + right) * pitch_mm, ltrunc or rtrunc)


def detect_peaks(pmap: PowerMap, k: int, exclusion_mm: float = 1.0) -> list[tuple[int, int]]:
    """k peaks by iterative maximum extraction with an exclusion radius."""
    if pmap.pitch is None:
        raise UndefinedMetricError("PowerMap lacks grid metadata")
    work = pmap.data.copy()
    nx, nz = work.shape
    ii, jj = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")
    px_mm = pmap.pitch[0] * 1e3
    pz_mm = pmap.pitch[1] * 1e3
    peaks = []
    for _ in range(k):
        flat = int(np.argmax(work))
        i, j = flat // nz, flat % nz
        if work[i, j] <= 0:
            raise UndefinedMetricError(f"fewer than {k} nonzero peaks")
        peaks.append((i, j))
        dist = np.hypot((ii - i) * px_mm, (jj - j) * pz_mm)
        work[dist <= exclusion_mm] = 0.0
    return peaks


def position_error(true_pos_mm: list[tuple[float, float]], pmap: PowerMap, k: int) -> float:
    """Mean Euclidean distance (mm) between true sources and detected peaks.

    Detections are matched to truths by the minimal-total-distance assignment
    (enumerated, intended for k <= 3).
    """
    if k != len(true_pos_mm):
        raise InvalidInputError("k must equal the number of true positions")
    peaks = detect_peaks(pmap, k)
    det_mm = [pmap.pixel_mm(i, j) for i, j in peaks]
    best = np.inf
    for perm in itertools.permutations(range(k)):
        total = sum(
            np.hypot(det_mm[perm[q]][0] - true_pos_mm[q][0], det_mm[perm[q]][1] - true_pos_mm[q][1])
            for q in range(k)
        )
        best = min(best, total)
    return best / k


def pcid(pmap: PowerMap, p1: tuple[int, int], p2: tuple[int, int]) -> float:
    """Peak-to-center intensity difference in dB between two map peaks.

    Samples the map along the segment p1-p2 (bilinear interpolation at unit
    pixel steps); I_max is the smaller of the two peak values (conservative).
    Returns -inf when the valley is exactly zero.
    """
    if p1 == p2:
        raise InvalidInputError("p1 and p2 must differ")
    v1 = pmap.data[p1]
    v2 = pmap.data[p2]
    if v1 <= 0 or v2 <= 0:
        raise UndefinedMetricError("both peaks must be positive")
    di = p2[0] - p1[0]
    dj = p2[1] - p1[1]
    npts = int(max(abs(di), abs(dj))) + 1
    ts = np.linspace(0.0, 1.0, max(npts, 2))
    imin = np.inf
    for t in ts:
        fi = p1[0] + t * di
        fj = p1[1] + t * dj
        imin = min(imin, _bilinear(pmap.data, fi, fj))
    imax = min(v1, v2)
    if imin <= 0:
        return -np.inf
    return 20.0 * np.log10(imin / imax)


def _bilinear(arr: NDArray, fi: float, fj: float) -> float:
    i0 = int(np.floor(fi))
    j0 = int(np.floor(fj))
    i0 = min(max(i0, 0), arr.shape[0] - 1)
    j0 = min(max(j0, 0), arr.shape[1] - 1)
    i1 = min(i0 + 1, arr.shape[0] - 1)
    j1 = min(j0 + 1, arr.shape[1] - 1)
    wi = fi - i0
    wj = fj - j0
    return float(
        arr[i0, j0] * (1 - wi) * (1 - wj)
        + arr[i1, j0] * wi * (1 - wj)
        + arr[i0, j1] * (1 - wi) * wj
        + arr[i1, j1] * wi * wj
    )


def cnr(pmap: PowerMap, zones: ZoneMasks) -> float:
    """Contrast-to-noise ratio in dB between signal and noise zones."""
    sig = pmap.data[zones.signal_mask]
    noi = pmap.data[zones.noise_mask]
    if sig.size == 0 or noi.size == 0:
        raise UndefinedMetricError("both zones must be non-empty")
    mu_i, mu_o = sig.mean(), noi.mean()
    var_i, var_o = sig.var(), noi.var()  # population (1/N)
    den = np.sqrt(var_i + var_o)
    if den == 0:
        raise UndefinedMetricError("zero variance in both zones")
    num = abs(mu_i - mu_o)
    if num == 0:
        return -np.inf
    return 20.0 * np.log10(num / den)


def dice(pmap: PowerMap, zones: ZoneMasks, threshold_db: float = -3.0) -> float:
    """Dice overlap between the thresholded map and the signal zone.

    The map is normalized to 0 dB at its peak (power dB: 10*log10); the
    detected set is restricted to signal + noise zones.
    """
    mx = pmap.data.max()
    if not np.any(zones.signal_mask):
        raise UndefinedMetricError("empty signal zone")
    if mx <= 0:
        raise UndefinedMetricError("map maximum is zero")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(pmap.data / mx)
    region = zones.signal_mask | zones.noise_mask
    detected = (db >= threshold_db) & region
    x = zones.signal_mask
    inter = np.count_nonzero(x & detected)
    return 2.0 * inter / (np.count_nonzero(x) + np.count_nonzero(detected))


def nmse(reference, test) -> float:
    """||reference - test||^2 / ||reference||^2 over the raw arrays."""
    ref = np.asarray(getattr(reference, "data", reference), dtype=np.float64)
    tst = np.asarray(getattr(test, "data", test), dtype=np.float64)
    if ref.shape != tst.shape:
        raise InvalidInputError("shapes must match")
    denom = float(np.sum(ref**2))
    if denom == 0:
        raise UndefinedMetricError("zero reference signal")
    return float(np.sum((ref - tst) ** 2)) / denom

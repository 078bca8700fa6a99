"""Time-domain delay-and-sum (time-exposure-acoustics) baseline.

For every pixel, the sensor traces are advanced by their sample delays,
summed, and the squared sum is integrated over time. No apodization and no
normalization by sensor count, matching the unweighted forward operator.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .geometry import AcquisitionGeometry, DelayTable
from .metrics import PowerMap
from .operators import RfFrame


def td_das(y: RfFrame, table: DelayTable, geom: AcquisitionGeometry) -> PowerMap:
    """X[i, j] = sum_k (sum_m y_m[k + delta_{m,n} - 1])^2 over valid samples.

    Independent of the adjoint-operator code path on purpose: this per-pixel
    gather is the reference the cross-module identity test checks against.
    """
    nm, nt = y.data.shape
    if table.delays.shape[0] != nm:
        raise InvalidInputError("delay table sensor count does not match frame")
    n = table.delays.shape[1]
    pmap = np.zeros(n)
    yd = y.data
    for pix in range(n):
        trace = np.zeros(nt)
        for m in range(nm):
            d = int(table.delays[m, pix])
            if d > nt:
                continue
            length = nt - d + 1
            trace[:length] += yd[m, d - 1 :]
        pmap[pix] = np.sum(trace**2)
    if geom.num_pixels != n:
        raise InvalidInputError("geometry grid does not match delay table")
    return PowerMap(pmap.reshape(geom.grid_size), origin=geom.grid_origin, pitch=geom.grid_pitch)

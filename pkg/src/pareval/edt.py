"""Exact Euclidean distance transform on anisotropic grids.

Separable lower-envelope-of-parabolas algorithm (Felzenszwalb and
Huttenlocher), one pass per axis with that axis's squared spacing as the
parabola weight. Squared distances are exact whenever the squared spacings
and the resulting sums are representable, e.g. for integer spacings.
"""
from __future__ import annotations

import numba
import numpy as np

INF = np.inf


@numba.njit(cache=True, nogil=True)
def _envelope_rows(f, w):
    """In-place 1D squared-distance pass over every row of the 2D array ``f``."""
    n_rows, n = f.shape
    v = np.empty(n, np.int64)
    z = np.empty(n + 1, np.float64)
    g = np.empty(n, np.float64)
    for r in range(n_rows):
        row = f[r]
        k = -1
        for q in range(n):
            fq = row[q]
            if fq == INF:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -INF
                z[1] = INF
                continue
            fqq = fq + w * q * q
            while True:
                p = v[k]
                s = (fqq - (row[p] + w * p * p)) / (2.0 * w * (q - p))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = INF
        if k < 0:
            continue
        j = 0
        for q in range(n):
            while z[j + 1] < q:
                j += 1
            p = v[j]
            d = q - p
            g[q] = w * d * d + row[p]
        for q in range(n):
            row[q] = g[q]


def edt_squared(mask: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Squared distance (mm^2) from each voxel centre to the nearest foreground centre.

    Foreground voxels hold 0; an all-background mask gives +inf everywhere.
    """
    mask = np.asarray(mask, dtype=bool)
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != mask.ndim:
        raise ValueError(f"need {mask.ndim} spacings, got {len(spacing)}")
    if not all(s > 0 for s in spacing):
        raise ValueError(f"spacing must be positive, got {spacing}")
    f = np.where(mask, 0.0, INF)
    if not mask.any():
        return f
    for axis, s in enumerate(spacing):
        moved = np.moveaxis(f, axis, -1)
        rows = np.ascontiguousarray(moved).reshape(-1, moved.shape[-1])
        _envelope_rows(rows, s * s)
        f = np.moveaxis(rows.reshape(moved.shape), -1, axis)
    return np.ascontiguousarray(f)


def edt(mask: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Euclidean distance (mm) to the nearest foreground voxel centre."""
    return np.sqrt(edt_squared(mask, spacing))

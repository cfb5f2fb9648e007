"""Lung extraction and the two-level split of an artery mask.

Level one (branch) is the part of the artery mask inside the lungs, level
two (main) the part outside.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume_io import GridMismatchError, VoxelGrid

DEFAULT_THRESHOLD_HU = -320.0
DEFAULT_CLOSING_RADIUS = 3
KEEP_FRACTION = 0.95
MAX_LUNGS = 2


class LungNotFoundError(ValueError):
    """No interior sub-threshold component survived."""


@dataclass(frozen=True)
class RegionSplit:
    main: np.ndarray
    branch: np.ndarray
    lung: np.ndarray


def connected_components(mask: np.ndarray, connectivity: int = 26) -> tuple[np.ndarray, np.ndarray]:
    """Label foreground components, largest first.

    Returns ``(labels, sizes)``: ``labels`` holds 1..K with 0 for background
    and ``sizes[k - 1]`` is the voxel count of label k, non-increasing.
    Equal-sized components keep their raster-scan order.
    """
    if connectivity not in (6, 26):
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    structure = ndimage.generate_binary_structure(3, 1 if connectivity == 6 else 3)
    raw, k = ndimage.label(np.asarray(mask, dtype=bool), structure=structure)
    if k == 0:
        return np.zeros(np.shape(mask), dtype=np.int32), np.zeros(0, dtype=np.int64)
    counts = np.bincount(raw.ravel(), minlength=k + 1)[1:]
    order = np.argsort(-counts, kind="stable")
    remap = np.zeros(k + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, k + 1, dtype=np.int32)
    return remap[raw], counts[order]


def ball(radius: int) -> np.ndarray:
    """Discrete ball of integer voxel radius (index space)."""
    r = int(radius)
    x, y, z = np.ogrid[-r:r + 1, -r:r + 1, -r:r + 1]
    return x * x + y * y + z * z <= r * r


def _touches_boundary(labels: np.ndarray) -> np.ndarray:
    faces = [labels[0], labels[-1], labels[:, 0], labels[:, -1], labels[:, :, 0], labels[:, :, -1]]
    return np.unique(np.concatenate([f.ravel() for f in faces]))


def binary_closing(mask: np.ndarray, radius: int) -> np.ndarray:
    """Closing with a discrete ball, padded so the volume edge does not erode."""
    if radius < 1:
        return mask.copy()
    r = int(radius)
    idx = np.argwhere(mask)
    if idx.size == 0:
        return mask.copy()
    lo = np.maximum(idx.min(axis=0) - 2 * r, 0)
    hi = idx.max(axis=0) + 2 * r + 1
    crop = mask[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    padded = np.pad(crop, r + 1)
    se = ball(r)
    closed = ndimage.binary_erosion(ndimage.binary_dilation(padded, se), se, border_value=1)
    out = mask.copy()
    out[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = closed[r + 1:-(r + 1), r + 1:-(r + 1), r + 1:-(r + 1)]
    return out


def lung_candidates(ct: VoxelGrid | np.ndarray, threshold_hu: float = DEFAULT_THRESHOLD_HU) -> np.ndarray:
    """Sub-threshold voxels not connected (26-adjacency) to the volume edge."""
    arr = ct.array if isinstance(ct, VoxelGrid) else np.asarray(ct)
    labels, _ = connected_components(arr < threshold_hu, connectivity=26)
    exterior = _touches_boundary(labels)
    keep = np.ones(labels.max() + 1, dtype=bool)
    keep[0] = False
    keep[exterior] = False
    return keep[labels]


def extract_lungs(
    ct: VoxelGrid | np.ndarray,
    threshold_hu: float = DEFAULT_THRESHOLD_HU,
    closing_radius_voxels: int = DEFAULT_CLOSING_RADIUS,
) -> np.ndarray:
    """Threshold, drop exterior air, keep the lung components, then close.

    The largest interior components are kept until they cover 95% of the
    interior sub-threshold volume, at most two of them.
    """
    interior = lung_candidates(ct, threshold_hu)
    labels, sizes = connected_components(interior, connectivity=26)
    if sizes.size == 0:
        raise LungNotFoundError("no lung found: no sub-threshold region inside the body")
    total = sizes.sum()
    n_keep = int(np.searchsorted(np.cumsum(sizes), KEEP_FRACTION * total) + 1)
    n_keep = min(n_keep, MAX_LUNGS, sizes.size)
    lungs = (labels > 0) & (labels <= n_keep)
    return binary_closing(lungs, closing_radius_voxels)


def split_levels(pa: np.ndarray, lung: np.ndarray) -> RegionSplit:
    pa = np.asarray(pa, dtype=bool)
    lung = np.asarray(lung, dtype=bool)
    if pa.shape != lung.shape:
        raise GridMismatchError(f"dimension mismatch: {pa.shape} vs {lung.shape}")
    return RegionSplit(main=pa & ~lung, branch=pa & lung, lung=lung)

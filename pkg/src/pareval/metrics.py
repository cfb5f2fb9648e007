"""Two-level accuracy metrics: Dice and HD95 per level, plus weighted scores.

All distances are in mm. HD95 defaults: distances between surface voxels,
nearest-rank 95th percentile taken per direction, then the larger of the two.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .edt import edt_squared
from .regions import RegionSplit
from .volume_io import GridMismatchError

HD_PERCENTILE = 95


@dataclass(frozen=True)
class LevelWeights:
    branch: float = 0.8
    main: float = 0.2

    def __post_init__(self):
        if not (0 <= self.branch <= 1 and 0 <= self.main <= 1):
            raise ValueError(f"level weights must lie in [0, 1], got {self}")
        if abs(self.branch + self.main - 1) > 1e-12:
            raise ValueError(f"level weights must sum to 1, got {self.branch} + {self.main}")

    def combine(self, main: float | None, branch: float | None) -> float | None:
        if main is None or branch is None:
            return None
        return self.branch * branch + self.main * main


@dataclass(frozen=True)
class HDOptions:
    """HD95 convention switches.

    ``surface``: compare surface voxels (default) or whole masks.
    ``pooled``: one percentile over both directed distance sets instead of
    the max of per-direction percentiles.
    """

    surface: bool = True
    pooled: bool = False
    percentile: float = HD_PERCENTILE


METRIC_FIELDS = ("dsc_main", "dsc_branch", "dsc_weighted", "hd95_main", "hd95_branch", "hd95_weighted")


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    dsc_main: float | None = None
    dsc_branch: float | None = None
    dsc_weighted: float | None = None
    hd95_main: float | None = None
    hd95_branch: float | None = None
    hd95_weighted: float | None = None

    def value(self, metric: str) -> float | None:
        if metric not in METRIC_FIELDS:
            raise KeyError(f"unknown metric {metric!r}; expected one of {METRIC_FIELDS}")
        return getattr(self, metric)

    def to_dict(self) -> dict:
        out = {"case_id": self.case_id}
        for name in METRIC_FIELDS:
            out[name] = getattr(self, name)
        out["defined"] = {name: getattr(self, name) is not None for name in METRIC_FIELDS}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> CaseScore:
        values = {}
        for name in METRIC_FIELDS:
            v = d.get(name)
            values[name] = None if v is None else float(v)
        return cls(case_id=str(d["case_id"]), **values)


def _check_shapes(*masks: np.ndarray) -> None:
    shapes = {np.shape(m) for m in masks}
    if len(shapes) > 1:
        raise GridMismatchError(f"dimension mismatch: {sorted(shapes)}")


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """2|a & b| / (|a| + |b|); 1 when both are empty."""
    _check_shapes(a, b)
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def surface(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with a 6-neighbour that is background or off-grid."""
    mask = np.asarray(mask, dtype=bool)
    p = np.pad(mask, 1)
    interior = (
        p[:-2, 1:-1, 1:-1] & p[2:, 1:-1, 1:-1]
        & p[1:-1, :-2, 1:-1] & p[1:-1, 2:, 1:-1]
        & p[1:-1, 1:-1, :-2] & p[1:-1, 1:-1, 2:]
    )
    return mask & ~interior


def nearest_rank(values: np.ndarray, percentile: float = HD_PERCENTILE) -> float:
    """Value at 1-based rank ceil(p/100 * n) of the ascending sort."""
    values = np.sort(np.asarray(values, dtype=float).ravel())
    n = values.size
    if n == 0:
        raise ValueError("percentile of an empty set")
    k = max(1, math.ceil(Fraction(str(percentile)) * n / 100))
    return float(values[min(k, n) - 1])


def directed_distances(src: np.ndarray, dst: np.ndarray, spacing) -> np.ndarray:
    """Distance from every ``src`` voxel to the nearest ``dst`` voxel (mm).

    The transform is computed on the bounding box of both sets, which holds
    every query point and every candidate nearest point.
    """
    union = src | dst
    idx = np.argwhere(union)
    lo = idx.min(axis=0)
    hi = idx.max(axis=0) + 1
    box = tuple(slice(l, h) for l, h in zip(lo, hi))
    d2 = edt_squared(dst[box], spacing)
    return np.sqrt(d2[src[box]])


def hd95(a: np.ndarray, b: np.ndarray, spacing, options: HDOptions = HDOptions()) -> float | None:
    """Percentile Hausdorff distance in mm, or None if either mask is empty."""
    _check_shapes(a, b)
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if not a.any() or not b.any():
        return None
    if options.surface:
        a, b = surface(a), surface(b)
    d_ab = directed_distances(a, b, spacing)
    d_ba = directed_distances(b, a, spacing)
    if options.pooled:
        return nearest_rank(np.concatenate([d_ab, d_ba]), options.percentile)
    return max(nearest_rank(d_ab, options.percentile), nearest_rank(d_ba, options.percentile))


def score_case(
    case_id: str,
    gt: RegionSplit,
    pred: RegionSplit,
    spacing,
    weights: LevelWeights = LevelWeights(),
    hd_options: HDOptions = HDOptions(),
) -> CaseScore:
    """Score one case on both levels; the branch pair is lung-confined by construction."""
    _check_shapes(gt.main, gt.branch, pred.main, pred.branch)
    dsc_main = dice(gt.main, pred.main)
    dsc_branch = dice(gt.branch, pred.branch)
    hd_main = hd95(gt.main, pred.main, spacing, hd_options)
    hd_branch = hd95(gt.branch, pred.branch, spacing, hd_options)
    return CaseScore(
        case_id=case_id,
        dsc_main=dsc_main,
        dsc_branch=dsc_branch,
        dsc_weighted=weights.combine(dsc_main, dsc_branch),
        hd95_main=hd_main,
        hd95_branch=hd_branch,
        hd95_weighted=weights.combine(hd_main, hd_branch),
    )

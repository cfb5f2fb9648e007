"""Synthetic thorax phantoms with a bifurcating artery tree.

Physical coordinates are ``index * spacing`` (mm), so voxel (0, 0, 0) is
centred at the origin. The tree trunk runs cranially (+z) in the gap between
the two lungs, splits into a left and right artery that each end on the
surface of one lung, and keeps bifurcating inside that lung.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .rng import SplitMix64, mix64
from .volume_io import VoxelGrid

MAIN = "main"
BRANCH = "branch"
LEVEL_FILTERS = (MAIN, BRANCH, "all")

AIR_HU = -1000
BODY_HU = 40
LUNG_HU = -800
VESSEL_HU = 300

MIN_ANGLE_DEG = 20.0
MAX_ANGLE_DEG = 60.0
LENGTH_PER_RADIUS = (6.0, 10.0)
_MAX_DRAWS = 24
# squared normalized radius a child end must reach inside its (shrunk) lung
_ACCEPT_DEPTH = 0.4
_HILUM_DROP = 0.7


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (128, 128, 128)
    spacing: tuple[float, float, float] = (0.7, 0.7, 1.0)
    lung_centers: tuple[tuple[float, float, float], ...] = ((22.8, 44.8, 64.0), (66.8, 44.8, 64.0))
    lung_semi_axes: tuple[tuple[float, float, float], ...] = ((15.0, 26.0, 45.0), (15.0, 26.0, 45.0))
    root_radius: float = 3.0
    depth: int = 5
    decay: float = 2.0 ** (-1.0 / 3.0)
    seed: int = 0
    # None -> centred ellipsoid spanning 98% of the field of view
    body_semi_axes: tuple[float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "lung_centers", tuple(tuple(map(float, c)) for c in self.lung_centers))
        object.__setattr__(self, "lung_semi_axes", tuple(tuple(map(float, a)) for a in self.lung_semi_axes))
        if self.body_semi_axes is not None:
            object.__setattr__(self, "body_semi_axes", tuple(map(float, self.body_semi_axes)))
        self.validate()

    @property
    def extent(self) -> np.ndarray:
        return (np.asarray(self.dims) - 1) * np.asarray(self.spacing)

    @property
    def body(self) -> tuple[np.ndarray, np.ndarray]:
        center = self.extent / 2
        axes = np.asarray(self.body_semi_axes) if self.body_semi_axes else 0.49 * self.extent
        return center, axes

    def validate(self) -> None:
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"dims must be 3 positive integers, got {self.dims}")
        if min(self.spacing) <= 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if not 0 < self.decay < 1:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")
        if self.root_radius <= 0:
            raise ValueError("root radius must be positive")
        if len(self.lung_centers) != 2 or len(self.lung_semi_axes) != 2:
            raise ValueError("exactly two lung ellipsoids are required")
        extent = self.extent
        for c, a in zip(self.lung_centers, self.lung_semi_axes):
            c, a = np.asarray(c), np.asarray(a)
            if np.any(a <= 0):
                raise ValueError(f"lung semi-axes must be positive, got {tuple(a)}")
            if np.any(c - a < 0) or np.any(c + a > extent):
                raise ValueError(f"lung ellipsoid {tuple(c)} +/- {tuple(a)} leaves the grid {tuple(extent)}")
        if self.body_semi_axes is not None and min(self.body_semi_axes) <= 0:
            raise ValueError("body semi-axes must be positive")
        # the chest wall must be thicker than a voxel diagonal, otherwise lung
        # and outside air are 26-adjacent and the lungs cannot be recovered
        wall, diagonal = self.wall_thickness(), float(np.linalg.norm(self.spacing))
        if wall < diagonal:
            raise ValueError(
                f"lungs come within {wall:.2f} mm of the body surface, less than the voxel diagonal {diagonal:.2f} mm"
            )

    def wall_thickness(self, samples: int = 4000) -> float:
        """Lower bound (mm) on the body tissue between the lungs and the outside air.

        A point at normalized radius r inside an ellipsoid is at least
        (1 - r) * min(semi-axes) from its surface; r is maximized over a
        Fibonacci sampling of both lung surfaces.
        """
        i = np.arange(samples) + 0.5
        polar = np.arccos(1 - 2 * i / samples)
        azimuth = math.pi * (1 + math.sqrt(5)) * i
        u = np.stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)], axis=1)
        center, axes = self.body
        r = max(
            float(np.sqrt((((np.asarray(c) + u * np.asarray(a) - center) / axes) ** 2).sum(axis=1)).max())
            for c, a in zip(self.lung_centers, self.lung_semi_axes)
        )
        return (1 - r) * float(axes.min())


@dataclass(frozen=True)
class Segment:
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    radius: float
    parent: int | None
    level: str


@dataclass
class TubeTree:
    segments: list[Segment] = field(default_factory=list)

    def __len__(self):
        return len(self.segments)

    def select(self, level_filter: str = "all") -> list[Segment]:
        if level_filter not in LEVEL_FILTERS:
            raise ValueError(f"level filter must be one of {LEVEL_FILTERS}")
        return [s for s in self.segments if level_filter == "all" or s.level == level_filter]

    def validate(self) -> None:
        roots = [i for i, s in enumerate(self.segments) if s.parent is None]
        if self.segments and roots != [0]:
            raise ValueError(f"tree must have exactly one root at index 0, got {roots}")
        for i, s in enumerate(self.segments):
            if s.radius <= 0:
                raise ValueError(f"segment {i} has non-positive radius")
            if s.parent is None:
                continue
            if not 0 <= s.parent < i:
                raise ValueError(f"segment {i} has parent {s.parent}; parents must precede children")
            p = self.segments[s.parent]
            if not np.allclose(p.end, s.start, atol=1e-9):
                raise ValueError(f"segment {i} does not start at its parent's end")
            if s.radius > p.radius:
                raise ValueError(f"segment {i} is wider than its parent")

    def to_dict(self) -> dict:
        return {"segments": [asdict(s) for s in self.segments]}


def inside_ellipsoid(points: np.ndarray, center, semi_axes) -> np.ndarray:
    q = (np.asarray(points, dtype=float) - np.asarray(center)) / np.asarray(semi_axes)
    return np.sum(q * q, axis=-1) <= 1.0


def _ray_exit_inside(origin, direction, center, semi_axes) -> float | None:
    """Distance along the ray to where it enters the ellipsoid, or None."""
    a = np.asarray(semi_axes)
    o = (np.asarray(origin) - np.asarray(center)) / a
    d = np.asarray(direction) / a
    qa, qb, qc = d @ d, 2 * (o @ d), o @ o - 1
    disc = qb * qb - 4 * qa * qc
    if disc < 0:
        return None
    t = (-qb - math.sqrt(disc)) / (2 * qa)
    return t if t > 0 else None


def _orthonormal(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(d, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(d, u)


def _rotate_away(d: np.ndarray, theta: float, phi: float) -> np.ndarray:
    u, v = _orthonormal(d)
    out = math.cos(theta) * d + math.sin(theta) * (math.cos(phi) * u + math.sin(phi) * v)
    return out / np.linalg.norm(out)


def _segment_level(start, end, spec: PhantomSpec) -> str:
    mid = (np.asarray(start) + np.asarray(end)) / 2
    for c, a in zip(spec.lung_centers, spec.lung_semi_axes):
        if inside_ellipsoid(mid, c, a):
            return BRANCH
    return MAIN


def _capsule_clear_of_lungs(start, end, radius, spec: PhantomSpec) -> bool:
    start, end = np.asarray(start), np.asarray(end)
    n = max(2, int(np.linalg.norm(end - start) / 0.25) + 1)
    pts = start + np.linspace(0, 1, n)[:, None] * (end - start)
    for c, a in zip(spec.lung_centers, spec.lung_semi_axes):
        if inside_ellipsoid(pts, c, np.asarray(a) + radius).any():
            return False
    return True


def generate_tree(spec: PhantomSpec) -> TubeTree:
    """Build a full binary tree with ``2**(depth+1) - 1`` segments.

    Each child's radius is its parent's times ``spec.decay`` and its axis
    leaves the parent axis at an angle drawn uniformly from [20, 60] degrees.
    """
    rng = SplitMix64(mix64(spec.seed))
    centers = np.asarray(spec.lung_centers)
    axes = np.asarray(spec.lung_semi_axes)
    # bifurcate below the lung equators so the arteries meet the lower
    # medial lung surface nearly head-on
    hilum = centers.mean(axis=0) - np.array([0.0, 0.0, _HILUM_DROP * axes[:, 2].min()])
    root_start = hilum - np.array([0.0, 0.0, 0.4 * axes[:, 2].min()])
    if not _capsule_clear_of_lungs(root_start, hilum, spec.root_radius, spec):
        raise ValueError("lungs are too close together: the trunk would touch a lung")
    if not inside_ellipsoid(root_start, *spec.body):
        raise ValueError("trunk origin lies outside the body")

    segments = [Segment(tuple(root_start), tuple(hilum), spec.root_radius, None, MAIN)]
    # (segment index, lung index) per segment, lung index None for the trunk
    lung_of = [None]
    up = np.array([0.0, 0.0, 1.0])

    # trunk bifurcation: one artery towards each lung, ending on its surface
    r1 = spec.root_radius * spec.decay
    for lung in range(2):
        lateral = np.array([np.sign(centers[lung, 0] - hilum[0]) or (1.0 if lung else -1.0), 0.0, 0.0])
        for _ in range(_MAX_DRAWS):
            theta = math.radians(rng.uniform(MIN_ANGLE_DEG, MAX_ANGLE_DEG))
            direction = math.cos(theta) * up + math.sin(theta) * lateral
            t = _ray_exit_inside(hilum, direction, centers[lung], axes[lung])
            if t is not None:
                break
        else:
            raise ValueError(f"no artery direction from the trunk reaches lung {lung}")
        end = hilum + t * direction
        segments.append(Segment(tuple(hilum), tuple(end), r1, 0, _segment_level(hilum, end, spec)))
        lung_of.append(lung)

    frontier = [1, 2]
    for _generation in range(2, spec.depth + 1):
        next_frontier = []
        for idx in frontier:
            parent = segments[idx]
            lung = lung_of[idx]
            p_end = np.asarray(parent.end)
            d = np.asarray(parent.end) - np.asarray(parent.start)
            d /= np.linalg.norm(d)
            radius = parent.radius * spec.decay
            phi0 = rng.uniform(0.0, 2 * math.pi)
            for side in range(2):
                end = _grow_inside(rng, p_end, d, radius, phi0 + side * math.pi, centers[lung], axes[lung])
                segments.append(Segment(tuple(p_end), tuple(end), radius, idx, _segment_level(p_end, end, spec)))
                lung_of.append(lung)
                next_frontier.append(len(segments) - 1)
        frontier = next_frontier

    return TubeTree(segments)


def _grow_inside(rng, start, d, radius, phi, center, semi_axes) -> np.ndarray:
    """Pick a child end point that keeps the tube inside its lung.

    The first draw uses azimuth ``phi`` (opposite the sibling); later draws
    pick the azimuth freely. Each draw also picks the angle and the length.
    A draw is accepted once its end is well inside the lung shrunk by
    ``radius`` (leaving room for descendants); otherwise the deepest
    candidate wins.
    """
    shrunk = np.maximum(np.asarray(semi_axes) - radius, 1e-6)
    best, best_depth = None, np.inf
    for attempt in range(_MAX_DRAWS):
        theta = math.radians(rng.uniform(MIN_ANGLE_DEG, MAX_ANGLE_DEG))
        azimuth = phi if attempt == 0 else rng.uniform(0.0, 2 * math.pi)
        length = radius * rng.uniform(*LENGTH_PER_RADIUS)
        end = start + length * _rotate_away(d, theta, azimuth)
        q = (end - center) / shrunk
        depth = q @ q
        if depth <= _ACCEPT_DEPTH:
            return end
        if depth < best_depth:
            best, best_depth = end, depth
    return best


def _voxel_coords(lo, hi, spacing):
    axes = [np.arange(lo[i], hi[i]) * spacing[i] for i in range(3)]
    return np.meshgrid(*axes, indexing="ij", sparse=True)


def _rasterize_capsule(out: np.ndarray, start, end, radius, spacing) -> None:
    spacing = np.asarray(spacing)
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    lo = np.floor((np.minimum(start, end) - radius) / spacing).astype(int)
    hi = np.ceil((np.maximum(start, end) + radius) / spacing).astype(int) + 1
    lo = np.clip(lo, 0, out.shape)
    hi = np.clip(hi, 0, out.shape)
    if np.any(hi <= lo):
        return
    x, y, z = _voxel_coords(lo, hi, spacing)
    ab = end - start
    denom = ab @ ab
    px, py, pz = x - start[0], y - start[1], z - start[2]
    if denom > 0:
        t = np.clip((px * ab[0] + py * ab[1] + pz * ab[2]) / denom, 0.0, 1.0)
    else:
        t = 0.0
    dx, dy, dz = px - t * ab[0], py - t * ab[1], pz - t * ab[2]
    hit = dx * dx + dy * dy + dz * dz <= radius * radius
    out[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] |= hit


def rasterize(tree: TubeTree, dims, spacing, level_filter: str = "all") -> np.ndarray:
    """Voxels whose centre lies within a selected segment's radius of its axis."""
    out = np.zeros(tuple(dims), dtype=bool)
    for seg in tree.select(level_filter):
        _rasterize_capsule(out, seg.start, seg.end, seg.radius, spacing)
    return out


def ellipsoid_mask(dims, spacing, center, semi_axes) -> np.ndarray:
    x, y, z = _voxel_coords((0, 0, 0), dims, spacing)
    c, a = np.asarray(center), np.asarray(semi_axes)
    return ((x - c[0]) / a[0]) ** 2 + ((y - c[1]) / a[1]) ** 2 + ((z - c[2]) / a[2]) ** 2 <= 1.0


def lung_mask(spec: PhantomSpec) -> np.ndarray:
    """The constructed lung ellipsoids: the ground truth for lung extraction."""
    out = np.zeros(spec.dims, dtype=bool)
    for c, a in zip(spec.lung_centers, spec.lung_semi_axes):
        out |= ellipsoid_mask(spec.dims, spec.spacing, c, a)
    return out


def synthesize_ct(spec: PhantomSpec, tree: TubeTree, noise_sigma: float = 20.0) -> VoxelGrid:
    """CT-like intensities in HU, rounded to signed-16."""
    ct = np.full(spec.dims, AIR_HU, dtype=np.float64)
    ct[ellipsoid_mask(spec.dims, spec.spacing, *spec.body)] = BODY_HU
    ct[lung_mask(spec)] = LUNG_HU
    ct[rasterize(tree, spec.dims, spec.spacing)] = VESSEL_HU
    if noise_sigma > 0:
        rng = SplitMix64(mix64(spec.seed ^ 0x5851F42D4C957F2D))
        noise = rng.normal_block(ct.size).reshape(spec.dims, order="F")
        ct += noise_sigma * noise
    return VoxelGrid(np.rint(ct).astype(np.int16), spec.spacing)


_CROSS = ndimage.generate_binary_structure(3, 1)


def dilate(mask: np.ndarray, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("k must be >= 1")
    return ndimage.binary_dilation(mask, structure=_CROSS, iterations=k)


def erode(mask: np.ndarray, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("k must be >= 1")
    return ndimage.binary_erosion(mask, structure=_CROSS, iterations=k)


def prune_distal(mask: np.ndarray, tree: TubeTree, radius_threshold: float, spacing) -> np.ndarray:
    """Drop voxels that only thin segments (radius below threshold) account for."""
    thin = TubeTree([s for s in tree.segments if s.radius < radius_threshold])
    thick = TubeTree([s for s in tree.segments if s.radius >= radius_threshold])
    removed = rasterize(thin, mask.shape, spacing) & ~rasterize(thick, mask.shape, spacing)
    return mask & ~removed


def add_blob(mask: np.ndarray, radius: float, spacing, center=None, seed: int = 0) -> np.ndarray:
    """Union a ball of ``radius`` mm; a missing centre is drawn from ``seed``."""
    spacing = np.asarray(spacing, dtype=float)
    if center is None:
        rng = SplitMix64(mix64(seed))
        extent = (np.asarray(mask.shape) - 1) * spacing
        center = [rng.uniform(0, e) for e in extent]
    out = mask.copy()
    _rasterize_capsule(out, center, center, radius, spacing)
    return out


def translate(mask: np.ndarray, offset) -> np.ndarray:
    """Shift by an integer voxel offset; vacated voxels are zero."""
    out = np.zeros_like(mask)
    src, dst = [], []
    for n, o in zip(mask.shape, offset):
        o = int(o)
        if abs(o) >= n:
            return out
        src.append(slice(max(0, -o), n - max(0, o)))
        dst.append(slice(max(0, o), n - max(0, -o)))
    out[tuple(dst)] = mask[tuple(src)]
    return out


def parse_degradation(text: str) -> tuple[str, list[float]]:
    """Parse ``name:arg,arg`` (e.g. ``dilate:2``, ``translate:3,0,0``)."""
    name, _, args = text.partition(":")
    values = [float(v) for v in args.split(",")] if args else []
    if name not in ("dilate", "erode", "prune_distal", "add_blob", "translate"):
        raise ValueError(f"unknown degradation {name!r}")
    return name, values


def apply_degradation(mask: np.ndarray, text: str, spacing, tree: TubeTree | None = None, seed: int = 0):
    name, args = parse_degradation(text)
    if name == "dilate":
        return dilate(mask, int(args[0]))
    if name == "erode":
        return erode(mask, int(args[0]))
    if name == "prune_distal":
        if tree is None:
            raise ValueError("prune_distal needs the generating tree")
        return prune_distal(mask, tree, args[0], spacing)
    if name == "add_blob":
        center = args[1:4] if len(args) >= 4 else None
        return add_blob(mask, args[0], spacing, center=center, seed=seed)
    return translate(mask, [int(a) for a in args])

"""Slow, obviously-correct reference implementations used only by the tests."""
from __future__ import annotations

import itertools
from collections import deque

import numpy as np

OFFSETS6 = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
OFFSETS26 = [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)]


def brute_surface(mask: np.ndarray) -> np.ndarray:
    out = np.zeros_like(mask, dtype=bool)
    for p in np.argwhere(mask):
        for o in OFFSETS6:
            q = p + o
            if np.any(q < 0) or np.any(q >= mask.shape) or not mask[tuple(q)]:
                out[tuple(p)] = True
                break
    return out


def brute_edt_squared(mask: np.ndarray, spacing) -> np.ndarray:
    """Squared distance from every voxel to the nearest foreground voxel."""
    fg = np.argwhere(mask).astype(float) * spacing
    grid = np.argwhere(np.ones(mask.shape, dtype=bool)).astype(float) * spacing
    if fg.size == 0:
        return np.full(mask.shape, np.inf)
    d2 = ((grid[:, None, :] - fg[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    return d2.reshape(mask.shape)


def nearest_rank_int(values, p: int = 95) -> float:
    v = sorted(values)
    k = max(1, -(-p * len(v) // 100))
    return v[k - 1]


def brute_hd95(a: np.ndarray, b: np.ndarray, spacing, p: int = 95, surface: bool = True, pooled: bool = False):
    if not a.any() or not b.any():
        return None
    if surface:
        a, b = brute_surface(a), brute_surface(b)
    pa = np.argwhere(a) * np.asarray(spacing, dtype=float)
    pb = np.argwhere(b) * np.asarray(spacing, dtype=float)
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2))
    ab, ba = d.min(axis=1), d.min(axis=0)
    if pooled:
        return nearest_rank_int(list(ab) + list(ba), p)
    return max(nearest_rank_int(list(ab), p), nearest_rank_int(list(ba), p))


def bfs_component_sizes(mask: np.ndarray, connectivity: int = 26) -> list[int]:
    offsets = OFFSETS26 if connectivity == 26 else OFFSETS6
    seen = np.zeros_like(mask, dtype=bool)
    sizes = []
    for start in map(tuple, np.argwhere(mask)):
        if seen[start]:
            continue
        seen[start] = True
        queue, n = deque([start]), 0
        while queue:
            p = queue.popleft()
            n += 1
            for o in offsets:
                q = (p[0] + o[0], p[1] + o[1], p[2] + o[2])
                if all(0 <= q[i] < mask.shape[i] for i in range(3)) and mask[q] and not seen[q]:
                    seen[q] = True
                    queue.append(q)
        sizes.append(n)
    return sorted(sizes, reverse=True)


def enumerate_wilcoxon_p(d, alternative: str = "greater") -> float:
    """Exact one-sided p by listing all 2**n sign assignments (no ties, no zeros)."""
    d = np.asarray(d, dtype=float)
    order = np.argsort(np.abs(d))
    ranks = np.empty(len(d))
    ranks[order] = np.arange(1, len(d) + 1)
    w = ranks[d > 0].sum()
    n = len(d)
    hits = 0
    for signs in range(2**n):
        s = sum(ranks[i] for i in range(n) if signs >> i & 1)
        hits += s >= w if alternative == "greater" else s <= w
    return hits / 2**n


def straight_line_ranking(table: list[dict], directions: dict[str, str]) -> tuple[list[float], list[int]]:
    """Average ranks and final positions for fully defined per-team metric means.

    ``table[i][metric]`` is team i's mean; ties take the mean of the tied
    ordinal ranks; positions count strictly better average ranks.
    """
    k = len(table)
    avg = [0.0] * k
    for metric, direction in directions.items():
        for i in range(k):
            vi = table[i][metric]
            better = sum(1 for j in range(k) if (table[j][metric] > vi if direction == "higher" else table[j][metric] < vi))
            equal = sum(1 for j in range(k) if table[j][metric] == vi)
            avg[i] += better + (equal + 1) / 2
    avg = [a / len(directions) for a in avg]
    positions = [1 + sum(1 for b in avg if b < a) for a in avg]
    return avg, positions

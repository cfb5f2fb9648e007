"""Standalone SVG figures and the CSV/JSON result tables."""
from __future__ import annotations

import csv
import io
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import METRIC_FIELDS, CaseScore, nearest_rank
from .ranking import RankingResult, bubble_data
from .rng import SplitMix64
from .stats import SignificanceMatrix, order_by_mean

SVG_NS = "http://www.w3.org/2000/svg"
LIGHT = "#f4b6b6"
DARK = "#a11d21"
NEUTRAL = "#e6e6e6"
FONT = "font-family:Helvetica,Arial,sans-serif;font-size:11px"


@dataclass
class BoxplotSpec:
    values: dict[str, list[float]]
    label: str
    unit: str = ""
    direction: str = "higher"
    jitter_seed: int = 0

    def __post_init__(self):
        for team, vals in self.values.items():
            if len(vals) == 0:
                raise ValueError(f"team {team} has no values to plot")

    @property
    def order(self) -> list[str]:
        return order_by_mean({t: dict(enumerate(v)) for t, v in self.values.items()}, self.direction)


def box_stats(values) -> dict[str, float | list[float]]:
    """Nearest-rank quartiles, 1.5 IQR whiskers and the outliers beyond them."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = (nearest_rank(v, p) for p in (25, 50, 75))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "min": float(v[0]),
        "q1": q1,
        "median": med,
        "q3": q3,
        "max": float(v[-1]),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(x) for x in v if x < lo_fence or x > hi_fence],
    }


def _svg(width: float, height: float) -> ET.Element:
    root = ET.Element(
        "svg",
        {
            "xmlns": SVG_NS,
            "version": "1.1",
            "width": f"{width:g}",
            "height": f"{height:g}",
            "viewBox": f"0 0 {width:g} {height:g}",
        },
    )
    ET.SubElement(root, "rect", {"width": "100%", "height": "100%", "fill": "white"})
    return root


def _text(parent, x, y, s, anchor="middle", rotate=None, cls=None):
    attrs = {"x": f"{x:.2f}", "y": f"{y:.2f}", "text-anchor": anchor, "style": FONT}
    if rotate is not None:
        attrs["transform"] = f"rotate({rotate:g} {x:.2f} {y:.2f})"
    if cls:
        attrs["class"] = cls
    el = ET.SubElement(parent, "text", attrs)
    el.text = s
    return el


def _serialize(root: ET.Element) -> str:
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _nice_range(lo: float, hi: float) -> tuple[float, float]:
    if hi - lo < 1e-12:
        pad = max(abs(lo) * 0.05, 0.5)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    step = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(step))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= step), default=step)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-9 * step:
        out.append(round(t, 10))
        t += step
    return out


def render_boxplot(spec: BoxplotSpec) -> str:
    """Box per team (left to right by mean, best first) over jittered raw points."""
    teams = spec.order
    slot, left, top, bottom = 36.0, 60.0, 30.0, 70.0
    plot_h = 260.0
    width = left + slot * len(teams) + 20
    height = top + plot_h + bottom
    all_vals = np.concatenate([np.asarray(spec.values[t], dtype=float) for t in teams])
    lo, hi = _nice_range(float(all_vals.min()), float(all_vals.max()))

    def y(v):
        return top + plot_h * (1 - (v - lo) / (hi - lo))

    root = _svg(width, height)
    title = f"{spec.label} ({spec.unit})" if spec.unit else spec.label
    _text(root, width / 2, 18, title)
    axis = ET.SubElement(root, "g", {"class": "axis", "stroke": "black"})
    ET.SubElement(axis, "line", {"x1": f"{left:g}", "y1": f"{top:g}", "x2": f"{left:g}", "y2": f"{top + plot_h:g}"})
    for t in _ticks(lo, hi):
        ET.SubElement(axis, "line", {"x1": f"{left - 4:g}", "y1": f"{y(t):.2f}", "x2": f"{left:g}", "y2": f"{y(t):.2f}"})
        _text(root, left - 6, y(t) + 4, f"{t:g}", anchor="end")

    rng = SplitMix64(spec.jitter_seed)
    for k, team in enumerate(teams):
        cx = left + slot * (k + 0.5)
        s = box_stats(spec.values[team])
        g = ET.SubElement(root, "g", {"class": "box", "data-team": team})
        for v in spec.values[team]:
            jx = cx + rng.uniform(-0.3, 0.3) * slot
            ET.SubElement(g, "circle", {"class": "point", "cx": f"{jx:.2f}", "cy": f"{y(v):.2f}", "r": "1.6",
                                        "fill": "#4a7ab5", "fill-opacity": "0.5"})
        half = slot * 0.3
        ET.SubElement(g, "line", {"class": "whisker", "x1": f"{cx:.2f}", "x2": f"{cx:.2f}",
                                  "y1": f"{y(s['whisker_low']):.2f}", "y2": f"{y(s['q1']):.2f}", "stroke": "black"})
        ET.SubElement(g, "line", {"class": "whisker", "x1": f"{cx:.2f}", "x2": f"{cx:.2f}",
                                  "y1": f"{y(s['q3']):.2f}", "y2": f"{y(s['whisker_high']):.2f}", "stroke": "black"})
        ET.SubElement(g, "rect", {"class": "iqr", "x": f"{cx - half:.2f}", "y": f"{y(s['q3']):.2f}",
                                  "width": f"{2 * half:.2f}", "height": f"{y(s['q1']) - y(s['q3']):.2f}",
                                  "fill": "none", "stroke": "black"})
        ET.SubElement(g, "line", {"class": "median", "x1": f"{cx - half:.2f}", "x2": f"{cx + half:.2f}",
                                  "y1": f"{y(s['median']):.2f}", "y2": f"{y(s['median']):.2f}",
                                  "stroke": "black", "stroke-width": "2"})
        for v in s["outliers"]:
            ET.SubElement(g, "circle", {"class": "outlier", "cx": f"{cx:.2f}", "cy": f"{y(v):.2f}", "r": "2.5",
                                        "fill": "none", "stroke": "black"})
        _text(root, cx, top + plot_h + 14, team, anchor="end", rotate=-45)
    return _serialize(root)


def render_significance(matrix: SignificanceMatrix) -> str:
    """Column team vs row team: light where the column team is significantly superior."""
    k = len(matrix.teams)
    if len(matrix.superior) != k or any(len(r) != k for r in matrix.superior):
        raise ValueError("significance matrix is not square in its team count")
    cell, left, top = 18.0, 60.0, 40.0
    width = left + cell * k + 20
    height = top + cell * k + 60
    root = _svg(width, height)
    _text(root, width / 2, 18, f"{matrix.metric} (alpha = {matrix.alpha:g})")
    grid = ET.SubElement(root, "g", {"class": "cells"})
    for row in range(k):
        for col in range(k):
            kind = matrix.cell(col, row)
            fill = {"self": NEUTRAL, "superior": LIGHT, "not-superior": DARK}[kind]
            ET.SubElement(grid, "rect", {
                "class": f"cell {kind}",
                "x": f"{left + col * cell:g}", "y": f"{top + row * cell:g}",
                "width": f"{cell:g}", "height": f"{cell:g}",
                "fill": fill, "stroke": "white",
            })
    for i, team in enumerate(matrix.teams):
        _text(root, left - 4, top + (i + 0.5) * cell + 4, team, anchor="end")
        _text(root, left + (i + 0.5) * cell, top + k * cell + 12, team, anchor="end", rotate=-45)
    return _serialize(root)


def _scatter(points, xlabel, ylabel, title, radii=None, shades=None) -> str:
    left, top, w, h = 60.0, 30.0, 360.0, 280.0
    root = _svg(left + w + 30, top + h + 50)
    _text(root, left + w / 2, 18, title)
    xs = [p[1] for p in points]
    ys = [p[2] for p in points]
    x0, x1 = _nice_range(min(xs), max(xs))
    y0, y1 = _nice_range(min(ys), max(ys))
    axis = ET.SubElement(root, "g", {"class": "axis", "stroke": "black"})
    ET.SubElement(axis, "rect", {"x": f"{left:g}", "y": f"{top:g}", "width": f"{w:g}", "height": f"{h:g}",
                                 "fill": "none"})
    _text(root, left + w / 2, top + h + 36, xlabel)
    _text(root, 16, top + h / 2, ylabel, rotate=-90)
    for t in _ticks(x0, x1):
        _text(root, left + w * (t - x0) / (x1 - x0), top + h + 14, f"{t:g}")
    for t in _ticks(y0, y1):
        _text(root, left - 6, top + h * (1 - (t - y0) / (y1 - y0)) + 4, f"{t:g}", anchor="end")
    for i, (team, x, yv) in enumerate(points):
        cx = left + w * (x - x0) / (x1 - x0)
        cy = top + h * (1 - (yv - y0) / (y1 - y0))
        r = radii[i] if radii else 3.0
        shade = shades[i] if shades else 0.5
        grey = int(40 + 180 * shade)
        g = ET.SubElement(root, "g", {"class": "team", "data-team": team})
        ET.SubElement(g, "circle", {"cx": f"{cx:.2f}", "cy": f"{cy:.2f}", "r": f"{r:.2f}",
                                    "fill": f"rgb({grey},{grey},255)", "fill-opacity": "0.7", "stroke": "black"})
        _text(g, cx + r + 2, cy + 4, team, anchor="start")
    return _serialize(root)


def render_bubbles(ranking: RankingResult) -> str:
    """2D projection of the accuracy/efficiency bubbles.

    x = mean weighted DSC, y = mean weighted HD95, radius grows with the
    square root of GPU memory, lighter fill = faster runtime quantile.
    """
    data = [b for b in bubble_data(ranking) if None not in b]
    if not data:
        raise ValueError("no team has all four bubble coordinates")
    gpus = [b[4] for b in data]
    top = max(gpus) or 1.0
    radii = [4 + 14 * math.sqrt(g / top) for g in gpus]
    rts = sorted(b[3] for b in data)
    shades = [1 - (rts.index(b[3]) / max(len(rts) - 1, 1)) for b in data]
    points = [(b[0], b[1], b[2]) for b in data]
    return _scatter(points, "weighted DSC (%)", "weighted HD95 (mm)", "accuracy vs efficiency", radii, shades)


def render_efficiency(ranking: RankingResult) -> str:
    """Runtime vs GPU memory per team."""
    points = [(b[0], b[3], b[4]) for b in bubble_data(ranking) if b[3] is not None and b[4] is not None]
    if not points:
        raise ValueError("no team has both runtime and GPU values")
    return _scatter(points, "running time (s/case)", "GPU memory (MB)", "running time vs GPU memory")


def _mean_sd(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def format_mean_sd(mean: float | None, sd: float | None, scale: float = 1.0) -> str:
    if mean is None:
        return "-"
    return f"{mean * scale:.2f}±{sd * scale:.2f}"


def summary_rows(ranking: RankingResult, scores: dict[str, list[CaseScore]]) -> list[dict]:
    """One row per team in final order, laid out like the results table."""
    rows = []
    for i in ranking.ordered():
        team = ranking.teams[i]
        row = {"team_id": team, "position": ranking.position[i]}
        for m in METRIC_FIELDS:
            vals = [c.value(m) for c in scores.get(team, []) if c.value(m) is not None]
            mean, sd = _mean_sd(vals)
            scale = 100.0 if m.startswith("dsc") else 1.0
            row[m] = format_mean_sd(mean, sd, scale)
            row[f"{m}_mean"] = mean
            row[f"{m}_sd"] = sd
            row[f"{m}_n"] = len(vals)
        rt, gpu = ranking.means["runtime"][i], ranking.means["gpu"][i]
        row["runtime_s"] = "-" if rt is None else f"{rt:.2f}"
        row["gpu_mb"] = "-" if gpu is None else f"{gpu:.0f}"
        row["runtime_mean"] = rt
        row["gpu_mean"] = gpu
        row["average_rank"] = ranking.average_rank[i]
        rows.append(row)
    return rows


def case_rows(scores: dict[str, list[CaseScore]]) -> list[dict]:
    rows = []
    for team in sorted(scores):
        for c in sorted(scores[team], key=lambda c: c.case_id):
            row = {"team_id": team, "case_id": c.case_id}
            row.update({m: c.value(m) for m in METRIC_FIELDS})
            rows.append(row)
    return rows


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def export_tables(ranking: RankingResult, scores: dict[str, list[CaseScore]], out_dir: str | Path) -> dict[str, Path]:
    """Write summary and per-case tables as CSV and JSON; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summary_rows(ranking, scores)
    cases = case_rows(scores)
    paths = {
        "summary_csv": out_dir / "summary.csv",
        "summary_json": out_dir / "summary.json",
        "cases_csv": out_dir / "cases.csv",
        "cases_json": out_dir / "cases.json",
    }
    paths["summary_csv"].write_text(_csv_text(summary), encoding="utf-8")
    paths["cases_csv"].write_text(_csv_text(cases), encoding="utf-8")
    paths["summary_json"].write_text(json.dumps(summary, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    paths["cases_json"].write_text(json.dumps(cases, indent=2) + "\n", encoding="utf-8")
    return paths

"""File-level orchestration: case discovery, per-case scoring, team files.

Two directory layouts are understood. A *flat* directory holds one
``<case>.nii.gz`` (or ``.nii``) per case. A *phantom* directory, marked by a
``manifest.json``, holds ``<case>/gt.nii.gz``, ``ct.nii.gz`` and
``lung.nii.gz``.
"""
from __future__ import annotations

import glob
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import EvalConfig
from .efficiency import EfficiencyRecord
from .metrics import CaseScore, score_case
from .ranking import TeamRecord
from .regions import extract_lungs, split_levels
from .volume_io import check_compatible, check_orientation, read_nifti, to_mask

MANIFEST = "manifest.json"
SUFFIXES = (".nii.gz", ".nii")


def is_phantom_dir(path: Path) -> bool:
    return (Path(path) / MANIFEST).is_file()


def list_cases(path: str | Path) -> list[str]:
    path = Path(path)
    if is_phantom_dir(path):
        manifest = json.loads((path / MANIFEST).read_text())
        return sorted(c["case_id"] for c in manifest["cases"])
    stems = set()
    for f in path.iterdir():
        for suffix in SUFFIXES:
            if f.is_file() and f.name.endswith(suffix):
                stems.add(f.name[: -len(suffix)])
    return sorted(stems)


def case_file(path: str | Path, case_id: str, role: str) -> Path | None:
    """Locate ``role`` (gt, ct or lung) for ``case_id``; None when absent.

    In a flat directory the role is implied by the directory itself.
    """
    path = Path(path)
    if is_phantom_dir(path):
        candidates = [path / case_id / f"{role}{s}" for s in SUFFIXES]
    else:
        candidates = [path / f"{case_id}{s}" for s in SUFFIXES]
    for c in candidates:
        if c.is_file():
            return c
    return None


@dataclass(frozen=True)
class CaseSources:
    gt: Path
    pred: Path
    lung: Path | None = None
    ct: Path | None = None


class CaseFailure(Exception):
    pass


def _find_sources(case_id, gt_dir, pred_dir, lung_dir, ct_dir, config: EvalConfig) -> CaseSources:
    gt = case_file(gt_dir, case_id, "gt")
    pred = case_file(pred_dir, case_id, "gt")
    missing = [name for name, p in (("ground truth", gt), ("prediction", pred)) if p is None]
    lung = ct = None
    if config.lung_source == "external":
        lung = case_file(lung_dir, case_id, "lung") if lung_dir else None
        if lung is None:
            missing.append("lung mask")
    else:
        ct = case_file(ct_dir, case_id, "ct") if ct_dir else None
        if ct is None:
            missing.append("CT")
    if missing:
        raise CaseFailure(f"missing {', '.join(missing)} file")
    return CaseSources(gt, pred, lung, ct)


def evaluate_case(case_id: str, sources: CaseSources, config: EvalConfig) -> CaseScore:
    gt_grid = read_nifti(sources.gt)
    pred_grid = read_nifti(sources.pred)
    check_compatible(gt_grid, pred_grid)
    check_orientation(gt_grid, pred_grid)
    if sources.lung is not None:
        lung_grid = read_nifti(sources.lung)
        check_compatible(gt_grid, lung_grid)
        lung = to_mask(lung_grid)
    else:
        ct_grid = read_nifti(sources.ct)
        check_compatible(gt_grid, ct_grid)
        lung = extract_lungs(ct_grid, config.threshold_hu, config.closing_radius)
    gt = split_levels(to_mask(gt_grid), lung)
    pred = split_levels(to_mask(pred_grid), lung)
    return score_case(case_id, gt, pred, gt_grid.spacing, config.weights, config.hd_options)


def evaluate_directory(
    gt_dir, pred_dir, config: EvalConfig, lung_dir=None, ct_dir=None, team_id: str = "team"
) -> dict:
    """Score every ground-truth case; failures become undefined scores plus a reason."""
    cases = list_cases(gt_dir)

    def run(case_id):
        try:
            sources = _find_sources(case_id, gt_dir, pred_dir, lung_dir, ct_dir, config)
            return evaluate_case(case_id, sources, config), None
        except (CaseFailure, ValueError, OSError) as exc:
            return CaseScore(case_id), str(exc)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, cases))
    else:
        results = [run(c) for c in cases]

    failed = [{"case_id": s.case_id, "reason": reason} for s, reason in results if reason is not None]
    return {
        "team_id": team_id,
        "config": config.to_dict(),
        "versions": {"pareval": __version__, "numpy": np.__version__},
        "cases": [s.to_dict() for s, _ in sorted(results, key=lambda r: r[0].case_id)],
        "failed": failed,
    }


def dump_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def expand(patterns) -> list[Path]:
    if isinstance(patterns, (str, Path)):
        patterns = [patterns]
    out = []
    for p in patterns:
        matches = sorted(glob.glob(str(p)))
        out.extend(Path(m) for m in matches)
    return sorted(set(out))


def load_scores(path: str | Path) -> tuple[str, list[CaseScore]]:
    data = json.loads(Path(path).read_text())
    return str(data["team_id"]), [CaseScore.from_dict(c) for c in data["cases"]]


def load_efficiency(path: str | Path) -> tuple[str, list[EfficiencyRecord]]:
    data = json.loads(Path(path).read_text())
    return str(data["team_id"]), [EfficiencyRecord.from_dict(r) for r in data["records"]]


def load_teams(score_paths, efficiency_paths=(), gpu_policy: str = "mean_of_max") -> list[TeamRecord]:
    efficiency = {}
    for p in efficiency_paths:
        team, records = load_efficiency(p)
        efficiency[team] = records
    teams = []
    for p in score_paths:
        team, cases = load_scores(p)
        teams.append(TeamRecord(team, cases, efficiency.get(team, []), gpu_policy))
    return sorted(teams, key=lambda t: t.team_id)


def score_table(teams: list[TeamRecord], metric: str) -> dict[str, dict[str, float | None]]:
    return {t.team_id: {c.case_id: c.value(metric) for c in t.cases} for t in teams}

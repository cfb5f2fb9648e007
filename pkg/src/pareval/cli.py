"""Command-line entry point: ``pareval <subcommand> ...``.

Exit codes: 0 success, 1 partial result or runtime failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import json
import shlex
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .efficiency import EfficiencyRecord, ingest_gpu_log, measure_command
from .metrics import METRIC_FIELDS, CaseScore
from .phantom import PhantomSpec, apply_degradation, generate_tree, lung_mask, rasterize, synthesize_ct
from .pipeline import (
    dump_json,
    evaluate_directory,
    expand,
    list_cases,
    load_scores,
    load_teams,
    score_table,
)
from .ranking import DIRECTION, RankingResult, bubble_data, rank_teams, stability_table
from .regions import LungNotFoundError, extract_lungs
from .report import (
    BoxplotSpec,
    export_tables,
    render_boxplot,
    render_bubbles,
    render_efficiency,
    render_significance,
)
from .rng import SplitMix64
from .stats import significance_map
from .volume_io import VoxelGrid, mask_grid, read_nifti, write_nifti

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


def _config(args):
    overrides = {}
    for key in ("alpha", "threads", "missing_policy", "gpu_policy", "threshold_hu", "closing_radius"):
        overrides[key] = getattr(args, key, None)
    if getattr(args, "weights", None):
        overrides["weight_branch"], overrides["weight_main"] = args.weights
    if getattr(args, "hd_mask", False):
        overrides["hd_surface"] = False
    if getattr(args, "hd_pooled", False):
        overrides["hd_pooled"] = True
    if getattr(args, "extract_lungs", False):
        overrides["lung_source"] = "extract"
    return load_config(getattr(args, "config", None), **overrides)


def _write_csv(rows: list[dict], path: Path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows({k: "" if v is None else v for k, v in r.items()} for r in rows)


def cmd_phantom(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = SplitMix64(args.seed)
    cases = []
    for i in range(args.cases):
        case_id = f"PA{i:06d}"
        spec = PhantomSpec(dims=tuple(args.dims), spacing=tuple(args.spacing), depth=args.depth,
                           root_radius=args.root_radius, seed=seeds.next_u64())
        tree = generate_tree(spec)
        gt = rasterize(tree, spec.dims, spec.spacing)
        case_dir = out / case_id
        case_dir.mkdir(exist_ok=True)
        ct = synthesize_ct(spec, tree, noise_sigma=args.noise)
        write_nifti(mask_grid(gt, ct), case_dir / "gt.nii.gz")
        write_nifti(ct, case_dir / "ct.nii.gz")
        write_nifti(mask_grid(lung_mask(spec), ct), case_dir / "lung.nii.gz")
        cases.append({
            "case_id": case_id,
            "seed": spec.seed,
            "spec": asdict(spec),
            "segments": len(tree),
            "main_segments": len(tree.select("main")),
            "vessel_voxels": int(gt.sum()),
        })
    manifest = {
        "generator": f"pareval {__version__}",
        "rng": "splitmix64",
        "seed": args.seed,
        "noise_sigma": args.noise,
        "cases": cases,
    }
    dump_json(manifest, out / "manifest.json")
    return EXIT_OK


def cmd_degrade(args) -> int:
    src = Path(args.phantom)
    manifest = json.loads((src / "manifest.json").read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for case in manifest["cases"]:
        spec = PhantomSpec(**{k: v for k, v in case["spec"].items()})
        grid = read_nifti(src / case["case_id"] / "gt.nii.gz")
        mask = grid.array > 0
        tree = generate_tree(spec) if any(op.startswith("prune_distal") for op in args.op) else None
        for op in args.op:
            mask = apply_degradation(mask, op, grid.spacing, tree=tree, seed=case["seed"])
        write_nifti(grid.with_array(mask.astype(np.uint8)), out / f"{case['case_id']}.nii.gz")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _config(args)
    if config.lung_source == "external" and not args.lung:
        raise ConfigError("--lung DIR is required unless --extract-lungs is given")
    ct_dir = args.ct or (args.gt if config.lung_source == "extract" else None)
    result = evaluate_directory(args.gt, args.pred, config, lung_dir=args.lung, ct_dir=ct_dir, team_id=args.team)
    dump_json(result, args.out)
    for f in result["failed"]:
        print(f"case {f['case_id']} failed: {f['reason']}", file=sys.stderr)
    return EXIT_PARTIAL if result["failed"] else EXIT_OK


def cmd_rank(args) -> int:
    config = _config(args)
    score_paths = expand(args.teams)
    if not score_paths:
        raise ConfigError(f"no team score files match {args.teams}")
    teams = load_teams(score_paths, expand(args.efficiency or []), config.gpu_policy)
    result = rank_teams(teams, missing_policy=config.missing_policy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json({"config": config.to_dict(), "ranking": result.to_dict()}, out / "ranking.json")
    _write_csv(result.rows(), out / "ranking.csv")
    stab = stability_table(result)
    dump_json(stab, out / "stability.json")
    _write_csv([{"team_id": t, **v} for t, v in stab.items()], out / "stability.csv")
    bubbles = [dict(zip(("team_id", "dsc_weighted_pct", "hd95_weighted_mm", "runtime_s", "gpu_mb"), b))
               for b in bubble_data(result)]
    dump_json(bubbles, out / "bubbles.json")
    _write_csv(bubbles, out / "bubbles.csv")
    return EXIT_OK


def cmd_significance(args) -> int:
    config = _config(args)
    if args.metric not in METRIC_FIELDS:
        raise ConfigError(f"--metric must be one of {METRIC_FIELDS}")
    teams = load_teams(expand(args.teams))
    if not teams:
        raise ConfigError(f"no team score files match {args.teams}")
    matrix = significance_map(score_table(teams, args.metric), DIRECTION[args.metric], config.alpha, args.metric)
    dump_json(matrix.to_dict(), args.out)
    if args.svg:
        Path(args.svg).write_text(render_significance(matrix), encoding="utf-8")
    return EXIT_OK


def cmd_report(args) -> int:
    data = json.loads(Path(args.ranking).read_text())
    config = load_config(None, **data.get("config", {}))
    ranking = RankingResult.from_dict(data["ranking"])
    scores: dict[str, list[CaseScore]] = {}
    for p in expand(args.scores):
        team, cases = load_scores(p)
        scores[team] = cases
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    teams = load_teams(expand(args.scores))
    for metric in METRIC_FIELDS:
        table = score_table(teams, metric)
        values = {t: [v for v in vals.values() if v is not None] for t, vals in table.items()}
        values = {t: v for t, v in values.items() if v}
        if values:
            scale = 100.0 if metric.startswith("dsc") else 1.0
            spec = BoxplotSpec({t: [scale * x for x in v] for t, v in values.items()}, metric,
                               "%" if scale != 1.0 else "mm", DIRECTION[metric])
            (out / f"box_{metric}.svg").write_text(render_boxplot(spec), encoding="utf-8")
        matrix = significance_map(table, DIRECTION[metric], config.alpha, metric)
        dump_json(matrix.to_dict(), out / f"significance_{metric}.json")
        (out / f"significance_{metric}.svg").write_text(render_significance(matrix), encoding="utf-8")
    try:
        (out / "bubbles.svg").write_text(render_bubbles(ranking), encoding="utf-8")
        (out / "efficiency.svg").write_text(render_efficiency(ranking), encoding="utf-8")
    except ValueError as exc:
        print(f"skipping efficiency figures: {exc}", file=sys.stderr)
    export_tables(ranking, scores, out)
    return EXIT_OK


def cmd_lungmask(args) -> int:
    ct = read_nifti(args.ct)
    try:
        lung = extract_lungs(ct, args.threshold_hu, args.closing_radius)
    except LungNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_PARTIAL
    write_nifti(mask_grid(lung, ct), args.out)
    return EXIT_OK


def cmd_measure(args) -> int:
    if args.cases:
        cases = list(args.cases)
    elif args.cases_from:
        cases = list_cases(args.cases_from)
    else:
        raise ConfigError("give --cases or --cases-from")
    template = shlex.split(args.cmd)
    records = []
    for case_id in cases:
        argv = [part.replace("{case}", case_id) for part in template]
        rec = measure_command(argv, case_id, timeout=args.timeout)
        gpu = 0.0
        if args.gpu_logs:
            log = Path(args.gpu_logs) / f"{case_id}.csv"
            if log.is_file():
                gpu = ingest_gpu_log(log)
        records.append(EfficiencyRecord(case_id, rec.runtime_seconds, gpu, rec.failed, rec.exit_status))
    dump_json({"team_id": args.team, "records": [r.to_dict() for r in records]}, args.out)
    return EXIT_PARTIAL if any(r.failed for r in records) else EXIT_OK


def _add_config_flags(p, evaluate=False, rank=False):
    p.add_argument("--config", help="flat JSON config file; command-line flags override it")
    if evaluate:
        p.add_argument("--weights", type=float, nargs=2, metavar=("BRANCH", "MAIN"),
                       help="level weights, must sum to 1 (default 0.8 0.2)")
        p.add_argument("--hd-mask", action="store_true",
                       help="HD95 over whole masks instead of surface voxels")
        p.add_argument("--hd-pooled", action="store_true",
                       help="one percentile over both directions instead of the max of two")
        p.add_argument("--threads", type=int, help="cases evaluated in parallel (default 1)")
        p.add_argument("--threshold-hu", type=float, help="lung threshold in HU (default -320)")
        p.add_argument("--closing-radius", type=int, help="lung closing radius in voxels (default 3)")
    if rank:
        p.add_argument("--missing-policy", choices=("worst", "exclude"),
                       help="undefined metric values rank last (default) or are left out")
        p.add_argument("--gpu-policy", choices=("mean_of_max", "max_of_max"),
                       help="per-team GPU statistic (default mean_of_max)")
        p.add_argument("--alpha", type=float, help="significance level (default 0.05)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pareval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pareval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate synthetic cases with exact ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cases", type=int, default=3, help="number of cases (default 3)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--dims", type=int, nargs=3, default=[128, 128, 128], help="voxels per axis")
    p.add_argument("--spacing", type=float, nargs=3, default=[0.7, 0.7, 1.0], help="mm per voxel")
    p.add_argument("--depth", type=int, default=5, help="bifurcation generations (default 5)")
    p.add_argument("--root-radius", type=float, default=3.0, help="trunk radius in mm (default 3)")
    p.add_argument("--noise", type=float, default=20.0, help="CT noise sigma in HU (default 20)")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("degrade", help="write degraded copies of phantom ground truth as predictions")
    p.add_argument("--phantom", required=True, help="phantom directory (with manifest.json)")
    p.add_argument("--out", required=True, help="flat output directory of <case>.nii.gz")
    p.add_argument("--op", action="append", required=True,
                   help="dilate:K, erode:K, prune_distal:MM, add_blob:MM[,X,Y,Z], translate:DX,DY,DZ; repeatable")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("evaluate", help="score one team's predictions against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth directory (flat or phantom layout)")
    p.add_argument("--pred", required=True, help="prediction directory, paired by case id")
    p.add_argument("--lung", help="lung-mask directory (flat or phantom layout)")
    p.add_argument("--extract-lungs", action="store_true", help="derive lungs from CT by thresholding")
    p.add_argument("--ct", help="CT directory for --extract-lungs (default: --gt)")
    p.add_argument("--team", default="team", help="team id written into the scores file")
    p.add_argument("--out", required=True, help="scores JSON path")
    _add_config_flags(p, evaluate=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", help="rank teams from their score and efficiency files")
    p.add_argument("--teams", nargs="+", required=True, help="glob(s) of team score JSON files")
    p.add_argument("--efficiency", nargs="*", help="glob(s) of team efficiency JSON files")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p, rank=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("significance", help="pairwise one-sided Wilcoxon superiority map")
    p.add_argument("--teams", nargs="+", required=True, help="glob(s) of team score JSON files")
    p.add_argument("--metric", required=True, choices=METRIC_FIELDS, help="metric to compare")
    p.add_argument("--out", required=True, help="matrix JSON path")
    p.add_argument("--svg", help="optional heatmap SVG path")
    _add_config_flags(p, rank=True)
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("report", help="figures and tables from a ranking and the team scores")
    p.add_argument("--ranking", required=True, help="ranking.json written by 'rank'")
    p.add_argument("--scores", nargs="+", required=True, help="glob(s) of team score JSON files")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("lungmask", help="extract a lung mask from a CT volume")
    p.add_argument("ct", help="CT NIfTI file")
    p.add_argument("--out", required=True, help="output mask path")
    p.add_argument("--threshold-hu", type=float, default=-320.0, help="lung threshold in HU (default -320)")
    p.add_argument("--closing-radius", type=int, default=3, help="closing radius in voxels (default 3)")
    p.set_defaults(func=cmd_lungmask)

    p = sub.add_parser("measure", help="time a per-case command and collect GPU peaks")
    p.add_argument("--cmd", required=True, help="command line; '{case}' is replaced by the case id")
    p.add_argument("--cases", nargs="*", help="case ids")
    p.add_argument("--cases-from", help="directory whose cases are measured")
    p.add_argument("--gpu-logs", help="directory of <case>.csv sampler logs (timestamp,used_mb)")
    p.add_argument("--timeout", type=float, help="per-case ceiling in seconds")
    p.add_argument("--team", default="team", help="team id written into the output")
    p.add_argument("--out", required=True, help="efficiency JSON path")
    p.set_defaults(func=cmd_measure)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())

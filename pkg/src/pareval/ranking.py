"""Rank-then-aggregate leaderboard over accuracy and efficiency metrics.

Step 1 averages each team's per-case weighted DSC and HD95 and takes its
mean runtime and GPU statistic; step 2 ranks teams on each of those four
values; step 3 averages the four ranks; step 4 orders teams by that average,
with equal averages sharing a position.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .efficiency import EfficiencyRecord, aggregate_efficiency
from .metrics import METRIC_FIELDS, CaseScore, LevelWeights

MISSING_POLICIES = ("worst", "exclude")

# metric -> "higher" or "lower" is better
DIRECTION = {
    "dsc_main": "higher",
    "dsc_branch": "higher",
    "dsc_weighted": "higher",
    "hd95_main": "lower",
    "hd95_branch": "lower",
    "hd95_weighted": "lower",
    "runtime": "lower",
    "gpu": "lower",
}
RANKED_METRICS = ("dsc_weighted", "hd95_weighted", "runtime", "gpu")
STABILITY_VARIANTS = {
    "DSC-M": "dsc_main",
    "DSC-B": "dsc_branch",
    "DSC-W": "dsc_weighted",
    "HD-M": "hd95_main",
    "HD-B": "hd95_branch",
    "HD-W": "hd95_weighted",
    "RT": "runtime",
    "GPU": "gpu",
}
ALL_METRICS = "All-Metrics"


class RosterError(ValueError):
    pass


def rank_metric(values, direction: str, missing_policy: str = "worst") -> list[float | None]:
    """Rank one value per team; rank 1 is best and ties share the average rank.

    Missing values (None) share the worst ranks under ``"worst"`` and get no
    rank under ``"exclude"``.
    """
    if direction not in ("higher", "lower"):
        raise ValueError(f"direction must be 'higher' or 'lower', got {direction!r}")
    if missing_policy not in MISSING_POLICIES:
        raise ValueError(f"missing policy must be one of {MISSING_POLICIES}")
    values = list(values)
    if not values:
        raise ValueError("cannot rank an empty team list")
    defined = [i for i, v in enumerate(values) if v is not None]
    ranks: list[float | None] = [None] * len(values)
    if defined:
        keyed = np.array([values[i] for i in defined], dtype=float)
        if direction == "higher":
            keyed = -keyed
        for i, r in zip(defined, rankdata(keyed, method="average")):
            ranks[i] = float(r)
    missing = [i for i, v in enumerate(values) if v is None]
    if missing and missing_policy == "worst":
        m, k = len(defined), len(values)
        shared = (m + 1 + k) / 2
        for i in missing:
            ranks[i] = shared
    return ranks


def competition_positions(scores: list[float]) -> list[int]:
    """1 + number of strictly smaller scores (equal scores tie)."""
    return [1 + sum(1 for other in scores if other < s) for s in scores]


@dataclass
class TeamRecord:
    team_id: str
    cases: list[CaseScore]
    efficiency: list[EfficiencyRecord] = field(default_factory=list)
    gpu_policy: str = "mean_of_max"

    def __post_init__(self):
        ids = [c.case_id for c in self.cases]
        dupes = sorted({c for c in ids if ids.count(c) > 1})
        if dupes:
            raise RosterError(f"team {self.team_id}: duplicate case ids {dupes}")

    @property
    def case_ids(self) -> set[str]:
        return {c.case_id for c in self.cases}

    def metric_mean(self, metric: str, weights: LevelWeights | None = None) -> tuple[float | None, int]:
        """Mean over cases where the metric is defined, and how many those were."""
        if metric in ("runtime", "gpu"):
            runtime, gpu = self.efficiency_summary()
            value = runtime if metric == "runtime" else gpu
            return value, len(self.efficiency)
        values = [self._case_value(c, metric, weights) for c in self.cases]
        defined = [v for v in values if v is not None]
        if not defined:
            return None, 0
        return float(np.mean(defined)), len(defined)

    @staticmethod
    def _case_value(case: CaseScore, metric: str, weights: LevelWeights | None):
        if weights is not None and metric.endswith("_weighted"):
            stem = metric[: -len("_weighted")]
            return weights.combine(case.value(stem + "_main"), case.value(stem + "_branch"))
        return case.value(metric)

    def efficiency_summary(self) -> tuple[float | None, float | None]:
        """Mean runtime and GPU statistic; runtime is None if any case failed."""
        if not self.efficiency:
            return None, None
        runtime, gpu = aggregate_efficiency(self.efficiency, self.gpu_policy)
        if any(r.failed for r in self.efficiency):
            runtime = None
        return runtime, gpu


@dataclass
class RankingResult:
    teams: list[str]
    means: dict[str, list[float | None]]
    defined_counts: dict[str, list[int]]
    ranks: dict[str, list[float | None]]
    average_rank: list[float | None]
    position: list[int | None]
    stability: dict[str, list[float | None]]
    missing_policy: str = "worst"

    def ordered(self) -> list[int]:
        """Team indices by final position, then team id."""
        big = len(self.teams) + 1
        return sorted(range(len(self.teams)), key=lambda i: (self.position[i] or big, self.teams[i]))

    def rows(self) -> list[dict]:
        out = []
        for i in self.ordered():
            row = {"team_id": self.teams[i]}
            for m in self.means:
                row[f"mean_{m}"] = self.means[m][i]
                row[f"n_{m}"] = self.defined_counts[m][i]
            for m in RANKED_METRICS:
                row[f"rank_{m}"] = self.ranks[m][i]
            row["average_rank"] = self.average_rank[i]
            row["position"] = self.position[i]
            for v in self.stability:
                row[f"stability_{v}"] = self.stability[v][i]
            out.append(row)
        return out

    def to_dict(self) -> dict:
        return {
            "teams": list(self.teams),
            "missing_policy": self.missing_policy,
            "means": self.means,
            "defined_counts": self.defined_counts,
            "ranks": self.ranks,
            "average_rank": self.average_rank,
            "position": self.position,
            "stability": self.stability,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RankingResult:
        return cls(
            teams=list(d["teams"]),
            means=d["means"],
            defined_counts=d["defined_counts"],
            ranks=d["ranks"],
            average_rank=d["average_rank"],
            position=d["position"],
            stability=d["stability"],
            missing_policy=d.get("missing_policy", "worst"),
        )


def check_roster(teams: list[TeamRecord]) -> None:
    if not teams:
        return
    reference = teams[0].case_ids
    for t in teams[1:]:
        missing = sorted(reference - t.case_ids)
        extra = sorted(t.case_ids - reference)
        if missing or extra:
            raise RosterError(
                f"team {t.team_id} case roster differs from {teams[0].team_id}: "
                f"missing {missing}, unexpected {extra}"
            )


def rank_teams(
    teams: list[TeamRecord],
    weights: LevelWeights | None = None,
    missing_policy: str = "worst",
) -> RankingResult:
    """Run steps 1-4 and the single-metric stability rankings.

    With ``weights`` the weighted per-case scores are recomputed from the
    main and branch values; otherwise the stored weighted scores are used.
    """
    if not teams:
        raise ValueError("no teams to rank")
    ids = [t.team_id for t in teams]
    if len(set(ids)) != len(ids):
        raise RosterError(f"duplicate team ids in {ids}")
    check_roster(teams)

    metrics = list(METRIC_FIELDS) + ["runtime", "gpu"]
    means, counts = {}, {}
    for m in metrics:
        pairs = [t.metric_mean(m, weights) for t in teams]
        means[m] = [p[0] for p in pairs]
        counts[m] = [p[1] for p in pairs]

    ranks = {m: rank_metric(means[m], DIRECTION[m], missing_policy) for m in metrics}

    average = []
    for i in range(len(teams)):
        got = [ranks[m][i] for m in RANKED_METRICS if ranks[m][i] is not None]
        average.append(sum(got) / len(got) if got else None)
    ranked = [i for i, a in enumerate(average) if a is not None]
    position: list[int | None] = [None] * len(teams)
    for i, p in zip(ranked, competition_positions([average[i] for i in ranked])):
        position[i] = p

    stability = {name: ranks[m] for name, m in STABILITY_VARIANTS.items()}
    stability[ALL_METRICS] = [None if p is None else float(p) for p in position]

    return RankingResult(
        teams=ids,
        means=means,
        defined_counts=counts,
        ranks={m: ranks[m] for m in metrics},
        average_rank=average,
        position=position,
        stability=stability,
        missing_policy=missing_policy,
    )


def stability_table(result: RankingResult) -> dict[str, dict[str, float | None]]:
    """team id -> variant -> rank, in final order (parallel-coordinates input)."""
    return {
        result.teams[i]: {v: result.stability[v][i] for v in result.stability}
        for i in result.ordered()
    }


def bubble_data(result: RankingResult) -> list[tuple[str, float | None, float | None, float | None, float | None]]:
    """(team, DSC-W in percent, HD95-W mm, runtime s, GPU MB) per team, final order."""
    out = []
    for i in result.ordered():
        dsc = result.means["dsc_weighted"][i]
        out.append(
            (
                result.teams[i],
                None if dsc is None else 100.0 * dsc,
                result.means["hd95_weighted"][i],
                result.means["runtime"][i],
                result.means["gpu"][i],
            )
        )
    return out


def position_discrepancies(result: RankingResult, published: dict[str, int]) -> list[dict]:
    """Teams whose computed position differs from a published one."""
    out = []
    for i, team in enumerate(result.teams):
        if team in published and published[team] != result.position[i]:
            out.append({"team_id": team, "published": published[team], "computed": result.position[i],
                        "average_rank": result.average_rank[i]})
    return out

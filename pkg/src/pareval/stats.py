"""One-sided Wilcoxon signed-rank tests and pairwise significance maps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

EXACT_MAX_N = 25
ALTERNATIVES = ("greater", "less")
DIRECTIONS = ("higher", "lower")


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+, sum of ranks of positive differences
    p_value: float
    n: int  # differences left after dropping zeros
    method: str  # "exact", "normal" or "degenerate"

    @property
    def degenerate(self) -> bool:
        return self.method == "degenerate"


def exact_upper_tail(weights: np.ndarray, observed: int) -> float:
    """P(sum of a random subset of ``weights`` >= observed), all 2**n subsets equally likely.

    ``weights`` are non-negative integers; the subset-sum counts are built
    by the usual knapsack recurrence.
    """
    weights = np.asarray(weights, dtype=np.int64)
    total = int(weights.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for w in weights:
        w = int(w)
        if w == 0:
            counts *= 2
        else:
            counts[w:] = counts[w:] + counts[:-w].copy()
    observed = max(observed, 0)
    if observed > total:
        return 0.0
    return float(counts[observed:].sum() / 2.0 ** weights.size)


def wilcoxon_one_sided(x, y, alternative: str = "greater", exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """Signed-rank test of ``x - y`` shifted above (``greater``) or below zero.

    Zero differences are dropped; tied magnitudes share their average rank.
    Exact null distribution up to ``exact_max_n`` non-zero pairs, normal
    approximation with tie-corrected variance and a 0.5 continuity
    correction beyond that.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"paired samples must have equal length, got {x.shape} and {y.shape}")
    if x.size == 0:
        raise ValueError("need at least one pair")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate")

    ranks = rankdata(np.abs(d))  # average ranks for ties
    w_plus = float(ranks[d > 0].sum())

    if n <= exact_max_n:
        # ranks are multiples of 1/2, so doubled ranks are exact integers
        doubled = np.rint(2 * ranks).astype(np.int64)
        w2 = int(round(2 * w_plus))
        if alternative == "greater":
            p = exact_upper_tail(doubled, w2)
        else:
            # W+ <= w  <=>  W- >= total - w
            p = exact_upper_tail(doubled, int(doubled.sum()) - w2)
        return WilcoxonResult(w_plus, min(1.0, p), n, "exact")

    mean = n * (n + 1) / 4
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24 - float(np.sum(tie_counts**3 - tie_counts)) / 48
    sd = math.sqrt(var)
    if alternative == "greater":
        z = (w_plus - mean - 0.5) / sd
        p = 0.5 * math.erfc(z / math.sqrt(2))
    else:
        z = (w_plus - mean + 0.5) / sd
        p = 0.5 * math.erfc(-z / math.sqrt(2))
    return WilcoxonResult(w_plus, min(1.0, p), n, "normal")


@dataclass
class SignificanceMatrix:
    """K x K superiority map; ``superior[i][j]`` means team i beats team j."""

    teams: list[str]
    superior: list[list[bool]]
    p_values: list[list[float | None]]
    alpha: float
    metric: str
    direction: str
    notes: dict[str, str] = field(default_factory=dict)

    def cell(self, i: int, j: int) -> str:
        if i == j:
            return "self"
        return "superior" if self.superior[i][j] else "not-superior"

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "direction": self.direction,
            "alpha": self.alpha,
            "teams": list(self.teams),
            "superior": [list(row) for row in self.superior],
            "p_values": [list(row) for row in self.p_values],
            "notes": dict(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SignificanceMatrix:
        return cls(
            teams=list(d["teams"]),
            superior=[[bool(c) for c in row] for row in d["superior"]],
            p_values=[list(row) for row in d["p_values"]],
            alpha=float(d["alpha"]),
            metric=d["metric"],
            direction=d["direction"],
            notes=dict(d.get("notes", {})),
        )


def team_mean(values: dict[str, float | None]) -> float | None:
    defined = [v for v in values.values() if v is not None]
    return sum(defined) / len(defined) if defined else None


def order_by_mean(scores: dict[str, dict[str, float | None]], direction: str) -> list[str]:
    """Team ids best first; teams without any defined value go last."""
    sign = -1.0 if direction == "higher" else 1.0

    def key(team):
        m = team_mean(scores[team])
        return (m is None, 0.0 if m is None else sign * m, team)

    return sorted(scores, key=key)


def significance_map(
    scores: dict[str, dict[str, float | None]],
    direction: str,
    alpha: float = 0.05,
    metric: str = "",
) -> SignificanceMatrix:
    """Pairwise one-sided tests; cases undefined for either team are dropped per pair.

    ``scores`` maps team id -> case id -> value (None when undefined).
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    teams = order_by_mean(scores, direction)
    alternative = "greater" if direction == "higher" else "less"
    k = len(teams)
    superior = [[False] * k for _ in range(k)]
    p_values: list[list[float | None]] = [[None] * k for _ in range(k)]
    notes = {}
    for i, ti in enumerate(teams):
        for j, tj in enumerate(teams):
            if i == j:
                continue
            shared = sorted(
                c for c in scores[ti]
                if c in scores[tj] and scores[ti][c] is not None and scores[tj][c] is not None
            )
            if not shared:
                notes[f"{ti}|{tj}"] = "no shared defined cases"
                continue
            x = [scores[ti][c] for c in shared]
            y = [scores[tj][c] for c in shared]
            result = wilcoxon_one_sided(x, y, alternative)
            p_values[i][j] = result.p_value
            superior[i][j] = result.p_value < alpha
    return SignificanceMatrix(teams, superior, p_values, alpha, metric, direction, notes)

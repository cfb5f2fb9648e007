import csv
from pathlib import Path

import numpy as np
import pytest

from pareval.efficiency import EfficiencyRecord
from pareval.metrics import CaseScore, LevelWeights
from pareval.ranking import (
    ALL_METRICS,
    RankingResult,
    RosterError,
    TeamRecord,
    bubble_data,
    competition_positions,
    position_discrepancies,
    rank_metric,
    rank_teams,
    stability_table,
)

PUBLISHED = Path(__file__).parent / "data" / "published_means.csv"


def published_rows():
    with open(PUBLISHED, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(s, scale=1.0):
    return None if s == "" else float(s) * scale


def published_team(row, n_cases=3, weighted_from_table=True):
    """Constant per-case scores equal to the published means."""
    vals = {
        "dsc_main": _num(row["dsc_main"], 0.01),
        "dsc_branch": _num(row["dsc_branch"], 0.01),
        "dsc_weighted": _num(row["dsc_weighted"], 0.01),
        "hd95_main": _num(row["hd95_main"]),
        "hd95_branch": _num(row["hd95_branch"]),
        "hd95_weighted": _num(row["hd95_weighted"]),
    }
    if not weighted_from_table:
        w = LevelWeights()
        vals["dsc_weighted"] = w.combine(vals["dsc_main"], vals["dsc_branch"])
        vals["hd95_weighted"] = w.combine(vals["hd95_main"], vals["hd95_branch"])
    cases = [CaseScore(f"PA{i:06d}", **vals) for i in range(n_cases)]
    eff = [EfficiencyRecord(c.case_id, float(row["runtime_s"]), float(row["gpu_mb"])) for c in cases]
    return TeamRecord(row["team"], cases, eff)


def make_team(team, dsc, hd, rt, gpu, n=3):
    cases = [CaseScore(f"c{i}", dsc, dsc, dsc, hd, hd, hd) for i in range(n)]
    eff = [EfficiencyRecord(f"c{i}", rt, gpu) for i in range(n)]
    return TeamRecord(team, cases, eff)


def test_rank_metric_examples():
    assert rank_metric([3, 1, 2], "lower") == [3, 1, 2]
    assert rank_metric([5, 5, 1], "higher") == [1.5, 1.5, 3]
    assert rank_metric([79.69, 79.68, 79.80], "higher") == [2, 3, 1]


def test_rank_metric_missing_policies():
    assert rank_metric([1.0, None, 2.0, None], "lower", "worst") == [1, 3.5, 2, 3.5]
    assert rank_metric([1.0, None, 2.0], "lower", "exclude") == [1, None, 2]
    assert rank_metric([None, None], "lower") == [1.5, 1.5]
    with pytest.raises(ValueError):
        rank_metric([], "lower")
    with pytest.raises(ValueError):
        rank_metric([1], "up")


def test_competition_positions():
    assert competition_positions([1.5, 1.5, 3.0]) == [1, 1, 3]
    assert competition_positions([2.0, 1.0]) == [2, 1]


def test_dominance():
    a = make_team("A", 0.9, 2.0, 1.0, 100)
    b = make_team("B", 0.8, 3.0, 2.0, 200)
    r = rank_teams([b, a])
    assert dict(zip(r.teams, r.position)) == {"A": 1, "B": 2}


def test_tied_average_ranks_share_position():
    # per-metric ranks A=(1,2,2,1), B=(2,1,1,2)
    a = make_team("A", 0.9, 3.0, 2.0, 100)
    b = make_team("B", 0.8, 2.0, 1.0, 200)
    r = rank_teams([a, b])
    assert r.average_rank == [1.5, 1.5]
    assert r.position == [1, 1]


def test_single_team():
    r = rank_teams([make_team("solo", 0.5, 1.0, 1.0, 1.0)])
    assert r.position == [1]


def test_weighted_means_reproduce_published_means():
    for row in published_rows():
        team = published_team(row, weighted_from_table=False)
        dsc, _ = team.metric_mean("dsc_weighted")
        assert dsc * 100 == pytest.approx(float(row["dsc_weighted"]), abs=0.02)
        if row["hd95_main"] and row["hd95_branch"]:
            hd, _ = team.metric_mean("hd95_weighted")
            assert hd == pytest.approx(float(row["hd95_weighted"]), abs=0.02)


def test_weights_recompute_weighted_scores():
    t = make_team("A", 0.5, 1.0, 1.0, 1.0)
    t.cases[0] = CaseScore("c0", 1.0, 0.0, 0.123, 2.0, 4.0, 9.9)
    mean, n = t.metric_mean("dsc_weighted", LevelWeights(0.5, 0.5))
    assert n == 3 and mean == pytest.approx((0.5 + 0.5 + 0.5) / 3)
    hd, _ = t.metric_mean("hd95_weighted", LevelWeights(0.5, 0.5))
    assert hd == pytest.approx((3.0 + 1.0 + 1.0) / 3)


def test_published_dsc_ranking_puts_t3_first():
    teams = [published_team(r) for r in published_rows()]
    r = rank_teams(teams)
    i = r.teams.index("T3")
    assert r.ranks["dsc_weighted"][i] == 1
    assert r.stability["DSC-W"][i] == 1


def test_undefined_hd95_ranked_worst():
    teams = [published_team(r) for r in published_rows()]
    r = rank_teams(teams)
    i24, i25 = r.teams.index("T24"), r.teams.index("T25")
    assert r.means["hd95_weighted"][i24] is None
    assert r.ranks["hd95_weighted"][i24] == r.ranks["hd95_weighted"][i25] == 24.5
    assert r.defined_counts["hd95_weighted"][i24] == 0
    ex = rank_teams(teams, missing_policy="exclude")
    assert ex.ranks["hd95_weighted"][i24] is None
    assert ex.average_rank[i24] == pytest.approx(
        np.mean([ex.ranks[m][i24] for m in ("dsc_weighted", "runtime", "gpu")])
    )


def test_bubble_tuple_for_t1():
    teams = [published_team(r) for r in published_rows()]
    r = rank_teams(teams)
    rows = {b[0]: b for b in bubble_data(r)}
    assert len(rows) == 25
    t1 = rows["T1"]
    assert t1[1:] == pytest.approx((79.69, 5.26, 7.92, 1674))
    assert all(np.isfinite(v) for v in t1[1:])


def test_stability_table_properties():
    teams = [published_team(r) for r in published_rows()]
    r = rank_teams(teams)
    table = stability_table(r)
    assert list(table) == [r.teams[i] for i in r.ordered()]
    for i, t in enumerate(r.teams):
        assert table[t][ALL_METRICS] == r.position[i]
    # T17: fastest runtime, other variants much worse
    t17 = table["T17"]
    assert t17["RT"] == 1
    others = [v for k, v in t17.items() if k not in ("RT", ALL_METRICS)]
    assert max(others) - t17["RT"] > 0


def test_best_everywhere_is_rank_one_everywhere():
    teams = [make_team("A", 0.95, 1.0, 1.0, 10)] + [
        make_team(f"T{i}", 0.5 + 0.01 * i, 5.0 - 0.1 * i, 10.0 + i, 100 + i) for i in range(5)
    ]
    r = rank_teams(teams)
    assert all(v == 1 for v in stability_table(r)["A"].values())


def test_failed_run_makes_runtime_missing():
    a = make_team("A", 0.9, 1.0, 1.0, 10)
    a.efficiency[1] = EfficiencyRecord("c1", 1.0, 10, failed=True, exit_status=1)
    b = make_team("B", 0.8, 2.0, 5.0, 20)
    r = rank_teams([a, b])
    assert r.means["runtime"][0] is None
    assert r.ranks["runtime"] == [2, 1]


def test_roster_checks():
    a = make_team("A", 0.9, 1.0, 1.0, 10, n=3)
    b = make_team("B", 0.9, 1.0, 1.0, 10, n=2)
    with pytest.raises(RosterError):
        rank_teams([a, b])
    with pytest.raises(RosterError):
        rank_teams([a, make_team("A", 0.1, 1.0, 1.0, 10)])
    with pytest.raises(RosterError):
        TeamRecord("X", [CaseScore("c"), CaseScore("c")])


def test_result_round_trip_and_discrepancies():
    teams = [published_team(r) for r in published_rows()]
    r = rank_teams(teams)
    assert RankingResult.from_dict(r.to_dict()).to_dict() == r.to_dict()
    assert len(r.rows()) == 25
    i = r.teams.index("T1")
    assert position_discrepancies(r, {"T1": r.position[i]}) == []
    assert position_discrepancies(r, {"T1": 99})[0]["computed"] == r.position[i]


def test_published_stability_among_top_twenty():
    r = rank_teams([published_team(row) for row in published_rows()[:20]])
    table = stability_table(r)
    assert [table["T1"][k] for k in ("DSC-B", "DSC-M", "DSC-W")] == [1, 18, 2]
    assert [table["T3"][k] for k in ("DSC-M", "DSC-B", "DSC-W")] == [2, 2, 1]
    assert table["T17"]["RT"] == 1

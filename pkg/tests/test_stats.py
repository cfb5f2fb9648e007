import numpy as np
import pytest
from scipy import stats as sps

from oracles import enumerate_wilcoxon_p
from pareval.stats import (
    SignificanceMatrix,
    exact_upper_tail,
    order_by_mean,
    significance_map,
    wilcoxon_one_sided,
)


def test_all_positive_five():
    r = wilcoxon_one_sided([2, 3, 4, 5, 6], [1, 1, 1, 1, 1])
    assert r.p_value == 1 / 32
    assert r.method == "exact"


def test_mixed_signs_example():
    d = np.array([1, 2, 3, 4, -5])
    r = wilcoxon_one_sided(d, np.zeros(5), "greater")
    assert r.statistic == 10
    assert r.p_value == 10 / 32


def test_identical_is_degenerate():
    r = wilcoxon_one_sided([1, 2, 3], [1, 2, 3])
    assert r.degenerate and r.p_value == 1.0


def test_less_mirrors_greater():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=10), rng.normal(size=10)
    assert wilcoxon_one_sided(x, y, "less").p_value == pytest.approx(wilcoxon_one_sided(y, x, "greater").p_value)


@pytest.mark.parametrize("n", [1, 4, 9, 12])
def test_exact_matches_enumeration(n):
    rng = np.random.default_rng(n)
    d = rng.permutation(np.arange(1, n + 1)) * rng.choice([-1, 1], n) + rng.uniform(-0.1, 0.1, n)
    for alt in ("greater", "less"):
        got = wilcoxon_one_sided(d, np.zeros(n), alt).p_value
        assert abs(got - enumerate_wilcoxon_p(d, alt)) <= 1e-12


def test_exact_matches_scipy_with_ties():
    d = np.array([1, 1, 2, 2, 2, -3, 4, 4, -1, 5])
    ours = wilcoxon_one_sided(d, np.zeros_like(d), "greater").p_value
    # scipy's exact mode ignores ties, so compare against a brute force over doubled ranks
    ranks = sps.rankdata(np.abs(d)) * 2
    w = ranks[d > 0].sum()
    hits = sum(
        1 for s in range(2 ** len(d)) if sum(ranks[i] for i in range(len(d)) if s >> i & 1) >= w
    )
    assert ours == hits / 2 ** len(d)


def test_normal_close_to_exact_at_twenty():
    rng = np.random.default_rng(20)
    for _ in range(20):
        d = rng.normal(0.3, 1.0, 20)
        exact = wilcoxon_one_sided(d, np.zeros(20)).p_value
        approx = wilcoxon_one_sided(d, np.zeros(20), exact_max_n=0).p_value
        assert abs(exact - approx) <= 0.01


def test_normal_matches_scipy():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=40), rng.normal(0.2, 1, size=40)
    ours = wilcoxon_one_sided(x, y, "greater")
    ref = sps.wilcoxon(x, y, alternative="greater", method="approx", correction=True)
    assert ours.method == "normal"
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_upper_tail_bounds():
    w = np.array([1, 2, 3])
    assert exact_upper_tail(w, 0) == 1.0
    assert exact_upper_tail(w, 7) == 0.0
    assert exact_upper_tail(w, 6) == 1 / 8


def test_input_validation():
    with pytest.raises(ValueError):
        wilcoxon_one_sided([1, 2], [1])
    with pytest.raises(ValueError):
        wilcoxon_one_sided([1], [0], "two-sided")


def test_identical_teams_not_superior():
    vals = {f"c{i}": float(i) for i in range(10)}
    m = significance_map({"A": vals, "B": dict(vals)}, "higher")
    assert not any(any(row) for row in m.superior)


def test_shifted_team_is_superior():
    rng = np.random.default_rng(0)
    b = {f"c{i}": float(v) for i, v in enumerate(rng.uniform(0, 1, 20))}
    a = {c: v + 1.0 for c, v in b.items()}
    m = significance_map({"B": b, "A": a}, "higher")
    ia, ib = m.teams.index("A"), m.teams.index("B")
    assert m.superior[ia][ib] and not m.superior[ib][ia]
    assert m.p_values[ia][ib] == 2.0 ** -20


def test_lower_is_better_direction():
    b = {f"c{i}": float(i) for i in range(12)}
    a = {c: v - 5.0 for c, v in b.items()}
    m = significance_map({"A": a, "B": b}, "lower")
    assert m.teams == ["A", "B"]
    assert m.superior[0][1] and not m.superior[1][0]


def test_matrix_shape_and_cells():
    rng = np.random.default_rng(1)
    scores = {t: {f"c{i}": float(rng.normal()) for i in range(8)} for t in "ABCD"}
    m = significance_map(scores, "higher")
    cells = [m.cell(i, j) for i in range(4) for j in range(4)]
    assert cells.count("self") == 4
    assert len(cells) - cells.count("self") == 12
    assert SignificanceMatrix.from_dict(m.to_dict()) == m


def test_undefined_cases_dropped_pairwise():
    a = {"c1": 0.9, "c2": None, "c3": 0.8}
    b = {"c1": 0.5, "c2": 0.4, "c3": 0.3}
    c = {"c1": None, "c2": None, "c3": None}
    m = significance_map({"A": a, "B": b, "C": c}, "higher")
    ia, ib = m.teams.index("A"), m.teams.index("B")
    assert m.p_values[ia][ib] == 0.25  # two shared cases, both positive
    assert m.teams[-1] == "C"
    assert any("no shared" in v for v in m.notes.values())


def test_order_by_mean_ties_by_id():
    assert order_by_mean({"B": {"x": 1.0}, "A": {"x": 1.0}, "C": {"x": 2.0}}, "higher") == ["C", "A", "B"]

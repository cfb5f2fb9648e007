import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_hd95, brute_surface, nearest_rank_int
from pareval.metrics import (
    CaseScore,
    HDOptions,
    LevelWeights,
    dice,
    hd95,
    nearest_rank,
    score_case,
    surface,
)
from pareval.regions import RegionSplit
from pareval.volume_io import GridMismatchError


def test_dice_examples():
    a = np.zeros((4, 4, 4), bool)
    a[0, 0, :2] = True
    assert dice(a, a) == 1.0
    b = np.zeros_like(a)
    b[3, 3, 3] = True
    assert dice(a, b) == 0.0
    c = a.copy()
    c[2, 2, :2] = True
    assert dice(a, c) == pytest.approx(2 * 2 / (2 + 4))
    assert round(dice(a, c), 4) == 0.6667


def test_dice_empty_conventions():
    z = np.zeros((3, 3, 3), bool)
    a = z.copy()
    a[1, 1, 1] = True
    assert dice(z, z) == 1.0
    assert dice(a, z) == 0.0


def test_dice_shape_mismatch():
    with pytest.raises(GridMismatchError):
        dice(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


@settings(max_examples=50, deadline=None)
@given(arrays(bool, (4, 5, 3)), arrays(bool, (4, 5, 3)))
def test_dice_symmetric_and_bounded(a, b):
    d = dice(a, b)
    assert 0.0 <= d <= 1.0
    assert d == dice(b, a)


def test_surface_examples():
    one = np.zeros((3, 3, 3), bool)
    one[1, 1, 1] = True
    assert np.array_equal(surface(one), one)
    cube = np.ones((3, 3, 3), bool)
    s = surface(cube)
    assert s.sum() == 26 and not s[1, 1, 1]
    assert not surface(np.zeros((3, 3, 3), bool)).any()


@settings(max_examples=50, deadline=None)
@given(arrays(bool, (5, 4, 6)))
def test_surface_matches_neighbour_scan(mask):
    assert np.array_equal(surface(mask), brute_surface(mask))


def test_nearest_rank():
    assert nearest_rank([5, 1, 2, 4, 3], 50) == 3
    assert nearest_rank(list(range(1, 101)), 95) == 95
    assert nearest_rank([7.0], 95) == 7.0
    # 95% of 20 is exactly 19: no floating-point overshoot to 20
    assert nearest_rank(list(range(1, 21)), 95) == 19
    with pytest.raises(ValueError):
        nearest_rank([], 95)


def test_hd95_identity_and_undefined():
    a = np.zeros((5, 5, 5), bool)
    a[1:3, 1:4, 2] = True
    assert hd95(a, a, (0.7, 0.7, 1.0)) == 0.0
    assert hd95(a, np.zeros_like(a), (1, 1, 1)) is None
    assert hd95(np.zeros_like(a), np.zeros_like(a), (1, 1, 1)) is None


def test_hd95_single_voxels():
    a = np.zeros((8, 3, 3), bool)
    b = np.zeros_like(a)
    a[1, 1, 1] = True
    b[4, 1, 1] = True
    assert hd95(a, b, (1, 1, 1)) == 3.0


def test_hd95_damps_outlier():
    a = np.zeros((130, 3, 3), bool)
    a[0:100, 1, 1] = True
    b = a.copy()
    b[99, 1, 1] = False
    b[129, 1, 1] = True
    spacing = (1.0, 1.0, 1.0)
    value = hd95(a, b, spacing)
    assert value == brute_hd95(a, b, spacing)
    assert value < 30.0  # the max-Hausdorff distance
    # 99 of the 100 directed distances are zero in each direction
    assert value == 0.0


@pytest.mark.parametrize("surface_only", [True, False])
@pytest.mark.parametrize("pooled", [True, False])
def test_hd95_conventions_match_oracle(surface_only, pooled):
    rng = np.random.default_rng(7)
    for _ in range(15):
        a = rng.random((9, 8, 7)) < 0.2
        b = rng.random((9, 8, 7)) < 0.2
        spacing = (0.674, 0.9, 1.3)
        got = hd95(a, b, spacing, HDOptions(surface=surface_only, pooled=pooled))
        want = brute_hd95(a, b, spacing, surface=surface_only, pooled=pooled)
        assert got == pytest.approx(want, abs=1e-9)


def test_hd95_symmetric():
    rng = np.random.default_rng(1)
    a = rng.random((10, 10, 10)) < 0.1
    b = rng.random((10, 10, 10)) < 0.1
    assert hd95(a, b, (1, 1, 2)) == hd95(b, a, (1, 1, 2))


def test_weights_validation_and_combine():
    w = LevelWeights()
    assert (w.branch, w.main) == (0.8, 0.2)
    assert w.combine(0.8970, 0.7719) == pytest.approx(0.79690, abs=5e-5)
    assert round(w.combine(7.08, 4.80), 2) == 5.26
    assert w.combine(None, 1.0) is None
    with pytest.raises(ValueError):
        LevelWeights(0.7, 0.2)
    with pytest.raises(ValueError):
        LevelWeights(1.2, -0.2)


def _split(main, branch):
    return RegionSplit(main=main, branch=branch, lung=np.zeros_like(main))


def test_score_case_identity():
    rng = np.random.default_rng(3)
    m = rng.random((8, 8, 8)) < 0.2
    b = rng.random((8, 8, 8)) < 0.2
    s = score_case("PA000001", _split(m, b), _split(m, b), (1, 1, 1))
    assert s.dsc_main == s.dsc_branch == s.dsc_weighted == 1.0
    assert s.hd95_main == s.hd95_branch == s.hd95_weighted == 0.0


def test_score_case_undefined_branch():
    m = np.zeros((6, 6, 6), bool)
    m[2:4, 2:4, 2:4] = True
    empty = np.zeros_like(m)
    branch = m.copy()
    s = score_case("c", _split(m, branch), _split(m, empty), (1, 1, 1))
    assert s.dsc_branch == 0.0
    assert s.hd95_branch is None and s.hd95_weighted is None
    d = s.to_dict()
    assert d["defined"]["hd95_weighted"] is False and d["hd95_weighted"] is None
    assert CaseScore.from_dict(d) == s


def test_case_score_value_rejects_unknown():
    with pytest.raises(KeyError):
        CaseScore("x").value("dsc")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40), st.integers(1, 100))
def test_nearest_rank_matches_integer_definition(values, p):
    assert nearest_rank(values, p) == nearest_rank_int(values, p)
    assert math.isfinite(nearest_rank(values, p))

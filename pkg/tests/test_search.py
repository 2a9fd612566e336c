import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from implcheck import fixtures as fx
from implcheck.expr import var, xnor
from implcheck.model import boolean_inputs, run
from implcheck.search import (RotationParam, SearchConfig, certify, iia, planes, rotate_layer, search)

CFG = SearchConfig.for_network()
SWAP = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)


@pytest.fixture
def swapped_high(M):
    return M.replace({"B1": xnor(var("A3"), var("A4")), "B2": xnor(var("A1"), var("A2"))})


angles = st.lists(st.floats(-math.pi, math.pi, allow_nan=False), min_size=6, max_size=6)


@given(angles)
@settings(max_examples=60)
def test_rotation_is_special_orthogonal(a):
    r = RotationParam(4, tuple(a)).matrix
    assert np.allclose(r.T @ r, np.eye(4), atol=1e-12)
    assert abs(np.linalg.det(r) - 1) < 1e-12


@given(angles)
@settings(max_examples=60)
def test_angles_round_trip_through_matrix(a):
    r = RotationParam(4, tuple(a)).matrix
    assert np.allclose(RotationParam.from_matrix(r).matrix, r, atol=1e-10)


def test_planes_cover_all_pairs():
    ps = planes(4)
    assert len(ps) == 6 and len(set(ps)) == 6


def test_reflection_is_rejected(N):
    with pytest.raises(ValueError):
        rotate_layer(N, fx.H1, np.diag([-1.0, 1, 1, 1]))
    with pytest.raises(ValueError):
        rotate_layer(N, fx.H1, np.ones((4, 4)))


def test_identity_rotation_leaves_network_unchanged(N):
    assert rotate_layer(N, fx.H1, np.eye(4)) == N


@given(angles)
@settings(max_examples=15, deadline=None)
def test_rotation_preserves_outputs(a):
    n = fx.network_n()
    rot = rotate_layer(n, fx.H1, RotationParam(4, tuple(a)).matrix)
    for x in boolean_inputs(fx.X)[::3]:
        assert abs(float(run(rot, x)["Y"]) - float(run(n, x)["Y"])) < 1e-9


def test_network_is_aligned_at_identity(N, M):
    assert iia(N, M, np.eye(4), CFG) == 1.0


def test_quarter_turn_within_a_cell_keeps_agreement(N, M):
    a = [0.0] * 6
    a[planes(4).index((0, 1))] = math.pi / 2
    assert iia(N, M, RotationParam(4, tuple(a)).matrix, CFG) == 1.0


def test_quarter_turn_across_cells_breaks_agreement(N, M):
    r = np.eye(4)
    r[[1, 2]] = r[[2, 1]]
    r[2] *= -1
    assert iia(N, M, r, CFG) < 1.0


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.integers(0, 5))
@settings(max_examples=20, deadline=None)
def test_gauge_invariance_within_cells(t1, t2, seed):
    n = fx.network_n()
    m = fx.circuit_m()
    r = fx.planted_rotation(seed)
    block = np.eye(4)
    block[:2, :2] = [[math.cos(t1), -math.sin(t1)], [math.sin(t1), math.cos(t1)]]
    block[2:, 2:] = [[math.cos(t2), -math.sin(t2)], [math.sin(t2), math.cos(t2)]]
    assert iia(n, m, r, CFG) == iia(n, m, r @ block, CFG)


def test_planted_rotation_is_recovered_by_its_inverse(M):
    rn = fx.build("rotated-N(3)")
    r0 = fx.planted_rotation(3)
    assert iia(rn, M, r0, CFG) == 1.0
    assert iia(rn, M, np.eye(4), CFG) < 1.0


def test_swapped_high_model(N, swapped_high):
    assert iia(N, swapped_high, SWAP, CFG) == 1.0
    assert iia(N, swapped_high, np.eye(4), CFG) < 1.0
    report, _, _, exact = certify(N, swapped_high, SWAP, CFG)
    assert exact and report.passed


def test_search_at_identity_certifies_exactly(N, M):
    res = search(N, M, CFG)
    assert res.iia == 1.0 and res.certified and res.exact
    assert res.evaluations == 1


def test_budget_exhaustion_is_not_certified(M):
    res = search(fx.build("rotated-N(0)"), M, SearchConfig.for_network(budget=30))
    assert res.evaluations <= 30
    assert not res.certified
    assert any("budget" in n for n in res.notes)


def test_search_is_deterministic(M):
    rn = fx.build("rotated-N(1)")
    cfg = SearchConfig.for_network(budget=200, seed=5)
    assert search(rn, M, cfg).to_dict() == search(rn, M, cfg).to_dict()


def test_config_must_cover_layer():
    with pytest.raises(ValueError):
        SearchConfig.for_network(cells={"B1": [0, 1], "B2": [2]})
    with pytest.raises(ValueError):
        SearchConfig.for_network(budget=0)


def test_search_finds_subspace_swap(N, swapped_high):
    res = search(N, swapped_high, CFG)
    assert res.iia == 1.0 and res.certified
    # the found rotation moves each cell onto the other pair of units
    assert np.allclose(res.matrix[:2, :2], 0, atol=1e-6) and np.allclose(res.matrix[2:, 2:], 0, atol=1e-6)

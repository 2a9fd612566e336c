import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from implcheck import fixtures as fx
from implcheck.abstraction import (Alignment, AlignmentError, VerificationReport, Witness,
                                   check_constructive_abstraction, check_exact_transformation, induce_maps, rename_map,
                                   replay, tau_of)
from implcheck.expr import var
from implcheck.intervene import Interventional
from implcheck.model import boolean_inputs, run

from strategies import boolean_models


@pytest.fixture(scope="module")
def align():
    return fx.alignment_n_to_m()


def test_tau_at_example_input(N, align):
    t, undef = tau_of(align, run(N, {"X1": 1, "X2": 0, "X3": 1, "X4": 1}))
    assert undef == []
    assert (t["B1"], t["B2"], t["C"]) == (0, 1, 0)
    assert [t[a] for a in fx.A] == [1, 0, 1, 1]


def test_tau_matches_circuit_on_every_input(N, M, align, net_inputs):
    for x in net_inputs:
        t, _ = tau_of(align, run(N, x))
        h = run(M, {a: t[a] for a in fx.A})
        assert all(t[v] == h[v] for v in M.variables)


def test_overlapping_cells_are_rejected():
    with pytest.raises(AlignmentError):
        Alignment({"P": ("a",), "Q": ("a", "b")}, {"P": var("a"), "Q": var("b")})


def test_map_outside_its_cell_is_rejected():
    with pytest.raises(AlignmentError):
        Alignment({"P": ("a",)}, {"P": var("b")})


def test_identity_exact_transformation(M, circuit_inputs):
    ivs = [Interventional.hard({"B1": v}) for v in (0, 1)] + [Interventional.hard({"B2": 0, "B1": 1})]
    rep = check_exact_transformation(M, M, Alignment.identity(M), {i: i for i in ivs}, ivs, circuit_inputs)
    assert rep.passed and rep.checked == 3 * 16


def test_empty_interventional_set_checks_nothing(M):
    rep = check_exact_transformation(M, M, Alignment.identity(M), {}, [])
    assert rep.passed and rep.checked == 0


def test_omega_must_cover_interventionals(M):
    i = Interventional.hard({"B1": 0})
    with pytest.raises(KeyError, match="omega is undefined"):
        check_exact_transformation(M, M, Alignment.identity(M), {}, [i])


def test_renaming_that_ignores_structure_fails(M_star, M, circuit_inputs):
    tau = rename_map({**{a: a for a in fx.A}, "D1": "B1", "D2": "B2", "C": "C"})
    i = Interventional.hard({"D1": 0})
    rep = check_exact_transformation(M_star, M, tau, {i: Interventional.hard({"B1": 0})}, [i], circuit_inputs)
    assert not rep.passed
    assert {"A1": 1, "A2": 0, "A3": 0, "A4": 0} in [w.base for w in rep.witnesses]


def test_network_abstracts_circuit(N, M, align, net_inputs):
    rep = check_constructive_abstraction(N, M, align, net_inputs)
    assert rep.passed
    assert rep.checked == 16 + 3 * 16 * 16
    assert rep.details["factual"] == 16


def test_jobs_do_not_change_the_report(N, M, align, net_inputs):
    a = check_constructive_abstraction(N, M, align, net_inputs).to_dict()
    b = check_constructive_abstraction(N, M, align, net_inputs, jobs=4).to_dict()
    assert a == b


def test_scrambled_alignment_fails_with_replayable_witness(N, M, net_inputs):
    al = fx.alignment_n_to_m_scrambled()
    rep = check_constructive_abstraction(N, M, al, net_inputs)
    assert not rep.passed
    w = rep.witnesses[0]
    assert w.kind == "factual"
    assert replay(N, M, al, w)


def test_printed_network_fails(M, align, net_inputs):
    rep = check_constructive_abstraction(fx.network_n_printed(), M, align, net_inputs)
    assert not rep.passed
    bases = [w.base for w in rep.witnesses if w.kind == "factual"]
    assert {"X1": 1, "X2": 0, "X3": 1, "X4": 0} in bases


def test_every_witness_replays(N, M, net_inputs):
    al = fx.alignment_n_to_m_scrambled()
    rep = check_constructive_abstraction(N, M, al, net_inputs, depth=1)
    for w in rep.witnesses:
        if w.kind in ("factual", "interchange"):
            assert replay(N, M, al, w)


def test_report_requires_witness_on_fail():
    with pytest.raises(ValueError):
        VerificationReport("x", "fail", 1, [])
    with pytest.raises(ValueError):
        VerificationReport("x", "pass", 1, [Witness("factual", base={})])


def test_target_subset_monotonicity(N, M, align, net_inputs):
    for targets in (["B1"], ["B2"], ["B1", "B2"]):
        assert check_constructive_abstraction(N, M, align, net_inputs, targets=targets).passed


def test_composition_of_abstractions(N, M, M_star, align, net_inputs, circuit_inputs):
    # N abstracts to M, and M abstracts to itself: the composed alignment holds
    ident = Alignment.identity(M)
    assert check_constructive_abstraction(M, M, ident, circuit_inputs).passed
    composed = Alignment(align.cells, {x: align.maps[x] for x in align.cells})
    assert check_constructive_abstraction(N, M, composed, net_inputs).passed


def test_induce_maps_fills_tables(N, M, net_inputs):
    al = fx.alignment_n_to_m()
    blank = Alignment(al.cells, {x: (None if x in ("B1", "B2") else m) for x, m in al.maps.items()})
    full = induce_maps(blank, N, M, net_inputs)
    assert full.maps["B1"] is not None and "B1" in full.support
    assert check_constructive_abstraction(N, M, full, net_inputs).passed


def test_induce_maps_detects_conflicts(N, M, net_inputs):
    al = fx.alignment_n_to_m()
    cells = dict(al.cells)
    cells["B1"] = ("H1_1",)
    cells["B2"] = tuple(v for v in fx.H1 if v != "H1_1")
    bad = Alignment(cells, {x: (None if x in ("B1", "B2") else m) for x, m in al.maps.items()})
    with pytest.raises(AlignmentError):
        induce_maps(bad, N, M, net_inputs)


@given(boolean_models)
@settings(max_examples=40, deadline=None)
def test_every_model_abstracts_itself(m):
    xs = boolean_inputs(m.inputs)
    rep = check_constructive_abstraction(m, m, Alignment.identity(m), xs,
                                         targets=[v for v in m.variables if v not in m.inputs], depth=1)
    # only unrealized values can be flagged
    realized = [run(m, x) for x in xs]
    for w in rep.witnesses:
        assert w.kind == "surjectivity"
        (v,) = w.targets
        assert len({r[v] for r in realized}) < 2

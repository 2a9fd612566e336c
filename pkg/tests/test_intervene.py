import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from implcheck import fixtures as fx
from implcheck.expr import const, var, xnor
from implcheck.intervene import (InterchangeSpec, Interventional, apply, check_algebra_laws, interchange,
                                 random_boolean_model, random_hard)
from implcheck.model import CycleError, boolean_inputs, run

from strategies import boolean_models

ZERO = {"X1": 0, "X2": 0, "X3": 0, "X4": 0}
SRC = {"X1": 0, "X2": 0, "X3": 1, "X4": 0}


def test_hard_intervention_on_circuit(M):
    m = apply(Interventional.hard({"B1": 0}), M)
    assert run(m)["C"] == 0
    assert m.mechanism("B1") == const(0)


def test_apply_does_not_mutate(M):
    before = dict(M.mechanisms)
    apply(Interventional.hard({"B1": 0, "B2": 0}), M)
    assert dict(M.mechanisms) == before


def test_empty_composition_is_identity(M):
    assert apply(Interventional.compose(), M) == M
    assert Interventional.compose() == Interventional.null()


def test_composition_later_wins():
    a = Interventional.hard({"B1": 0, "B2": 1})
    b = Interventional.hard({"B1": 1})
    assert Interventional.compose(a, b).values == {"B1": 1, "B2": 1}
    assert a.then(b) == Interventional.compose(a, b)


def test_replace_that_closes_a_cycle_is_rejected(M):
    with pytest.raises(CycleError):
        apply(Interventional.replace({"A1": var("C")}), M)


def test_unknown_target_is_rejected(M):
    with pytest.raises(KeyError):
        apply(Interventional.hard({"Q": 1}), M)


def test_values_of_soft_intervention_raise():
    with pytest.raises(ValueError):
        Interventional.replace({"B1": var("A1")}).values


def test_interchange_on_printed_network():
    spec = InterchangeSpec(ZERO, SRC, ("H1_3", "H1_4"))
    r = interchange(fx.network_n_printed(), spec)
    assert (r["H1_3"], r["H1_4"]) == (1, 0)
    assert r["Y"] == Fraction(199, 100)


def test_interchange_on_corrected_network(N):
    r = interchange(N, InterchangeSpec(ZERO, SRC, ("H1_3", "H1_4")))
    assert r["Y"] == Fraction(1, 100)


def test_interchange_on_circuit(M):
    base = {"A1": 0, "A2": 0, "A3": 0, "A4": 0}
    source = {"A1": 0, "A2": 0, "A3": 1, "A4": 0}
    assert interchange(M, InterchangeSpec(base, source, ("B2",)))["C"] == 0


def test_interchange_depth_limit(M):
    x = {"A1": 0, "A2": 0, "A3": 0, "A4": 0}
    spec = InterchangeSpec(x, x, ("B1",))
    for _ in range(2):
        spec = InterchangeSpec(x, spec, ("B1",))
    assert spec.depth == 3
    interchange(M, spec)
    with pytest.raises(ValueError):
        interchange(M, InterchangeSpec(x, spec, ("B1",)))


def test_interchange_requires_targets_and_inputs(M):
    x = {"A1": 0, "A2": 0, "A3": 0, "A4": 0}
    with pytest.raises(ValueError):
        InterchangeSpec(x, x, ())
    with pytest.raises(ValueError):
        interchange(M, InterchangeSpec({"A1": 0}, x, ("B1",)))


def test_interchange_on_all_inputs_equals_source_run(M, circuit_inputs):
    for b in circuit_inputs[::5]:
        for s in circuit_inputs:
            assert interchange(M, InterchangeSpec(b, s, M.inputs)) == run(M, s)


def test_output_moves_iff_patched_variable_moves(M, circuit_inputs):
    for b in circuit_inputs:
        for s in circuit_inputs:
            r = interchange(M, InterchangeSpec(b, s, ("B2",)))
            base = run(M, b)
            assert (r["C"] != base["C"]) == (r["B2"] != base["B2"])


def test_algebra_laws_hold_on_thousand_cases():
    rng = random.Random(7)
    models, samples = [], []
    for _ in range(60):
        m = random_boolean_model(rng)
        models.append(m)
        samples.append([random_hard(rng, m) for _ in range(5)])
    report = check_algebra_laws(models, samples)
    assert report.passed
    assert report.checked >= 1000


def test_algebra_law_checker_rejects_soft(M):
    with pytest.raises(ValueError):
        check_algebra_laws([M], [[Interventional.replace({"B1": var("A1")})]])


@given(boolean_models, st.integers(0, 2**32 - 1))
@settings(max_examples=80)
def test_disjoint_hard_interventions_commute(m, seed):
    rng = random.Random(seed)
    i = random_hard(rng, m)
    j = random_hard(rng, m, exclude=i.targets)
    if set(i.targets) & set(j.targets):
        return
    assert apply(j, apply(i, m)) == apply(i, apply(j, m))


@given(boolean_models, st.integers(0, 2**32 - 1))
@settings(max_examples=80)
def test_hard_interventions_are_idempotent_and_override(m, seed):
    rng = random.Random(seed)
    i = random_hard(rng, m)
    assert apply(i, apply(i, m)) == apply(i, m)
    j = Interventional.hard({t: 1 - v for t, v in i.values.items()})
    r = run(apply(j, apply(i, m)))
    assert all(r[t] == j.values[t] for t in j.targets)


@given(boolean_models)
@settings(max_examples=40)
def test_interchange_with_same_base_and_source_is_factual(m):
    x = {v: 1 for v in m.inputs}
    t = tuple(v for v in m.variables if v not in m.inputs)[:1] or m.inputs[:1]
    assert interchange(m, InterchangeSpec(x, x, t)) == run(m, x)

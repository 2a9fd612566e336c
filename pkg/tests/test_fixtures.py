from pathlib import Path

import numpy as np
import pytest

from implcheck import fixtures as fx
from implcheck import formats as fm
from implcheck.model import run

GOLDEN = Path(__file__).resolve().parent.parent / "fixtures"


def test_circuit_counts(M):
    assert len(M.variables) == 7
    assert sum(M.mechanism(v).op == "xnor" for v in M.variables if v not in M.inputs) == 3


def test_network_counts(N):
    assert len(N.variables) == 13
    assert N.inputs == tuple(fx.X)


def test_corrected_weight_sign():
    assert fx.W3 != fx.W3_PRINTED
    assert [abs(x[0]) for x in fx.W3] == [abs(x[0]) for x in fx.W3_PRINTED]


def test_catalog_builds_everything():
    for name in fx.CATALOG:
        assert fx.build(name) is not None
    assert fx.build("rotated-N(2)").name == "rotated-N(2)"
    with pytest.raises(KeyError):
        fx.build("rotated-N(x)")
    with pytest.raises(KeyError):
        fx.build("nothing")


def test_symbolic_equality_task_matches_circuit(M):
    task = fx.gen_equality_task()
    assert len(task) == 16
    for inst in task:
        x = dict(zip(fx.A, inst.objects))
        assert inst.label == run(M, x)["C"]
        assert inst.sameness == (run(M, x)["B1"], run(M, x)["B2"])


def test_symbolic_task_examples():
    task = fx.gen_equality_task()
    assert task[0].objects == (0, 0, 0, 0) and task[0].label == 1
    assert task[4].objects == (0, 0, 1, 0) and task[4].label == 0


def test_distributed_task_is_seeded():
    a = fx.gen_equality_task(8, "distributed", dim=5, seed=3)
    b = fx.gen_equality_task(8, "distributed", dim=5, seed=3)
    for x, y in zip(a, b):
        assert all(np.array_equal(p, q) for p, q in zip(x.objects, y.objects))
        assert x.label == y.label
    for inst in a:
        assert all(abs(np.linalg.norm(o) - 1) < 1e-12 for o in inst.objects)
        s1, s2 = inst.sameness
        assert inst.label == int(s1 == s2)


def test_equality_task_rejects_bad_arguments():
    with pytest.raises(ValueError):
        fx.gen_equality_task(0)
    with pytest.raises(ValueError):
        fx.gen_equality_task(4, "other")


@pytest.mark.parametrize("name", ["circuit-M", "network-N", "network-N-printed", "circuit-M-star"])
def test_golden_models(name):
    assert fm.load_model(GOLDEN / f"{name}.cm") == fx.build(name)


def test_golden_alignment_and_translation():
    assert fm.load_alignment(GOLDEN / "alignment-N-to-M.align") == fx.alignment_n_to_m()
    assert fm.load_translation(GOLDEN / "translation-M-star-to-M.tr") == fx.translation_m_star_to_m()


def test_golden_weights_build_network(N):
    mats = [m for _, m in fm.load_weights(GOLDEN / "network-N.weights")]
    assert fm.network_from_weights(mats, "network-N") == N

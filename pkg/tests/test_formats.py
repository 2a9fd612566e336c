import json
from fractions import Fraction

import pytest
from hypothesis import given, settings

from implcheck import fixtures as fx
from implcheck import formats as fm
from implcheck.intervene import Interventional
from implcheck.expr import const, var
from implcheck.model import run

from strategies import boolean_models


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize("name", ["circuit-M", "network-N", "circuit-M-star", "network-N-printed"])
def test_model_round_trip(tmp_path, name):
    m = fx.build(name)
    p = _write(tmp_path, "m.cm", fm.render(fm.dump_model(m)))
    assert fm.load_model(p) == m


@given(boolean_models)
@settings(max_examples=30, deadline=None)
def test_random_model_round_trip(m):
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "m.cm"
        p.write_text(fm.render(fm.dump_model(m)))
        back = fm.load_model(p)
    assert run(back) == run(m)


def test_decimals_are_read_exactly(tmp_path):
    text = json.dumps({"variables": [{"name": "Y", "domain": "real"}], "defaults": {"Y": 0}, "mechanisms": {}})
    text = text.replace('"Y": 0}', '"Y": 0.99}')
    m = fm.load_model(_write(tmp_path, "y.cm", text))
    assert run(m)["Y"] == Fraction(99, 100)


def test_bad_json_reports_line_and_column(tmp_path):
    p = _write(tmp_path, "bad.cm", '{\n  "variables": [\n    {"name": "A"\n  ]\n}\n')
    with pytest.raises(fm.FormatError) as exc:
        fm.load_model(p)
    assert exc.value.line == 4 and exc.value.column is not None


def test_bad_expression_points_into_the_file(tmp_path):
    text = ('{"variables": [{"name": "A", "domain": "bool"}, {"name": "B", "domain": "bool"}],\n'
            ' "inputs": ["A"], "defaults": {"A": 0},\n'
            ' "mechanisms": {"B": "(xnor (var A) (wat A))"}}\n')
    with pytest.raises(fm.FormatError) as exc:
        fm.load_model(_write(tmp_path, "e.cm", text))
    assert exc.value.line == 3
    assert exc.value.column > 18


def test_missing_field(tmp_path):
    with pytest.raises(fm.FormatError, match="variables"):
        fm.load_model(_write(tmp_path, "x.cm", "{}"))


def test_alignment_round_trip(tmp_path):
    al = fx.alignment_n_to_m()
    assert fm.load_alignment(_write(tmp_path, "a.align", fm.render(fm.dump_alignment(al)))) == al


def test_translation_round_trip(tmp_path):
    t = fx.translation_m_star_to_m()
    assert fm.load_translation(_write(tmp_path, "t.tr", fm.render(fm.dump_translation(t)))) == t


def test_linear_translation_needs_model(tmp_path, N):
    from implcheck.translate import Translation
    t = Translation.linear(N, fx.H1, ["Z1", "Z2", "Z3", "Z4"], [[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0],
                                                                 [0, 1, 0, 0]])
    p = _write(tmp_path, "l.tr", fm.render(fm.dump_translation(t, tolerance=1e-7)))
    with pytest.raises(fm.FormatError):
        fm.load_translation(p)
    assert fm.load_translation(p, N) == t


def test_interventional_round_trip(tmp_path):
    for iv in (Interventional.hard({"B1": 1, "B2": 0}), Interventional.replace({"D1": var("A1")})):
        p = _write(tmp_path, "i.iv", json.dumps(fm.dump_interventional(iv)))
        assert fm.load_interventional(p) == iv
    p = _write(tmp_path, "c.iv", '{"compose": [{"hard": {"B1": 0}}, {"hard": {"B1": 1}}]}')
    assert fm.load_interventional(p).values == {"B1": 1}
    with pytest.raises(fm.FormatError):
        fm.load_interventional(_write(tmp_path, "u.iv", '{"soft": {}}'))


def test_inputs_file(tmp_path):
    xs = fm.load_inputs(_write(tmp_path, "in.json", '[{"A1": 1, "A2": "1/2"}]'))
    assert xs == [{"A1": 1, "A2": Fraction(1, 2)}]
    with pytest.raises(fm.FormatError):
        fm.load_inputs(_write(tmp_path, "bad.json", '{"A1": 1}'))


def test_weights_round_trip(tmp_path, N):
    text = fm.dump_weights([("W1", fx.W1), ("W2", fx.W2), ("W3", fx.W3)])
    p = _write(tmp_path, "n.weights", text)
    assert [m for _, m in fm.load_weights(p)] == [fx.W1, fx.W2, fx.W3]
    assert fm.load_model(p).mechanisms == N.mechanisms


def test_weights_errors_have_lines(tmp_path):
    with pytest.raises(fm.FormatError) as exc:
        fm.load_weights(_write(tmp_path, "w.weights", "# c\nmatrix W 2 2\n1 0\n0\n"))
    assert exc.value.line == 4
    with pytest.raises(fm.FormatError) as exc:
        fm.load_weights(_write(tmp_path, "w2.weights", "\nbogus\n"))
    assert exc.value.line == 2


def test_report_header_and_atomic_write(tmp_path):
    src = _write(tmp_path, "in.txt", "abc")
    out = tmp_path / "r" / "report.json"
    text = fm.write_report(out, "run", {"verdict": "pass", "q": Fraction(1, 3)}, {"model": str(src)})
    data = json.loads(out.read_text())
    assert out.read_text() == text
    assert list(data)[:3] == ["tool", "command", "files"]
    assert data["files"]["model"]["sha256"] == \
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert data["q"] == "1/3"
    assert [p.name for p in out.parent.iterdir()] == ["report.json"]

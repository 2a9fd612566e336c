import filecmp
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"
CFG = ROOT / "configs"


def cli(*args, cwd=None, env=None):
    return subprocess.run([sys.executable, "-m", "implcheck", *map(str, args)], capture_output=True, text=True,
                          cwd=cwd, env={**os.environ, **(env or {})})


def report(proc):
    return json.loads(proc.stdout)


def test_version():
    out = cli("--version")
    assert out.returncode == 0 and out.stdout.startswith("implcheck ")


def test_run_prints_assignment():
    out = cli("run", "--model", FIX / "circuit-M.cm")
    assert out.returncode == 0
    assert json.loads(out.stdout) == {"A1": 0, "A2": 0, "A3": 0, "A4": 0, "B1": 1, "B2": 1, "C": 1}


def test_run_over_inputs_report():
    out = cli("run", "--model", FIX / "network-N-printed.cm", "--inputs", "all-boolean")
    assert out.returncode == 0
    rows = report(out)["runs"]
    assert len(rows) == 16
    row = next(r for r in rows if r["input"] == {"X1": 1, "X2": 0, "X3": 1, "X4": 1})
    assert row["values"]["Y"] == "199/100"


def test_intervene(tmp_path):
    iv = tmp_path / "b1.iv"
    iv.write_text('{"hard": {"B1": 0}}')
    out = cli("intervene", "--model", FIX / "circuit-M.cm", "--intervention", iv)
    assert out.returncode == 0
    assert '"C": 0' in out.stdout


def test_verify_abstraction_pass_and_fail():
    ok = cli("verify-abstraction", "--low", FIX / "network-N.cm", "--high", FIX / "circuit-M.cm",
             "--alignment", FIX / "alignment-N-to-M.align", "--inputs", "all-boolean")
    assert ok.returncode == 0 and report(ok)["report"]["verdict"] == "pass"
    assert report(ok)["report"]["checked"] == 784
    bad = cli("verify-abstraction", "--low", FIX / "network-N-printed.cm", "--high", FIX / "circuit-M.cm",
              "--alignment", FIX / "alignment-N-to-M.align", "--inputs", "all-boolean")
    assert bad.returncode == 1 and report(bad)["report"]["witness_count"] > 0


def test_verify_abstraction_weights_file():
    ok = cli("verify-abstraction", "--low", FIX / "network-N.weights", "--high", FIX / "circuit-M.cm",
             "--alignment", FIX / "alignment-N-to-M.align", "--inputs", "all-boolean")
    assert ok.returncode == 0


def test_verify_translation(tmp_path):
    emitted = tmp_path / "tm.cm"
    out = cli("verify-translation", "--model", FIX / "circuit-M-star.cm", "--translation",
              FIX / "translation-M-star-to-M.tr", "--against", FIX / "circuit-M.cm", "--inputs", "all-boolean",
              "--emit-model", emitted)
    assert out.returncode == 0
    from implcheck import formats as fm
    assert fm.load_model(emitted).mechanisms == fm.load_model(FIX / "circuit-M.cm").mechanisms


def test_verify_aut(tmp_path):
    from implcheck import formats as fm
    from implcheck.abstraction import Alignment
    ident = tmp_path / "id.align"
    ident.write_text(fm.render(fm.dump_alignment(Alignment.identity(fm.load_model(FIX / "circuit-M.cm")))))
    ok = cli("verify-aut", "--low", FIX / "circuit-M-star.cm", "--high", FIX / "circuit-M.cm", "--translation",
             FIX / "translation-M-star-to-M.tr", "--alignment", ident, "--inputs", "all-boolean")
    assert ok.returncode == 0 and report(ok)["report"]["details"]["pullback_checks"] > 0
    out = cli("verify-aut", "--low", FIX / "circuit-M-star.cm", "--high", FIX / "circuit-M.cm", "--translation",
              FIX / "translation-M-star-to-M.tr", "--alignment", FIX / "alignment-N-to-M.align",
              "--inputs", "all-boolean")
    # the network alignment does not fit the circuit: a usage-level error
    assert out.returncode == 2


def test_audit_request():
    out = cli("audit", "--request", CFG / "audit-B2.json")
    assert out.returncode == 0
    body = report(out)
    assert body["verdict"] == "pass"
    assert set(body["files"]) == {"low", "high", "alignment", "request"}


def test_audit_flags_failing_property():
    out = cli("audit", "--low", FIX / "network-N.cm", "--high", FIX / "circuit-M.cm", "--alignment",
              FIX / "alignment-N-to-M.align", "--vehicle", "B2", "--property", "(const 1)", "--inputs", "all-boolean")
    assert out.returncode == 1


def test_search_writes_certified_report(tmp_path):
    dest = tmp_path / "search.json"
    out = cli("search-alignment", "--model", FIX / "network-N.cm", "--high", FIX / "circuit-M.cm",
              "--config", CFG / "search-network-N.json", "-o", dest)
    assert out.returncode == 0
    body = json.loads(dest.read_text())
    assert body["search"]["certified"] and body["search"]["exact"]
    assert body["files"]["config"]["sha256"]


def test_search_budget_failure_and_determinism(tmp_path):
    cli("fixtures", "export", "--dir", tmp_path, "rotated-N(4)")
    model = tmp_path / "rotated-N(4).cm"
    args = ("search-alignment", "--model", model, "--high", FIX / "circuit-M.cm",
            "--config", CFG / "search-network-N.json", "--budget", "200")
    a = cli(*args)
    b = cli(*args, "--jobs", "max")
    assert a.returncode == 1
    assert a.stdout == b.stdout


def test_fixture_export_matches_golden(tmp_path):
    out = cli("fixtures", "export", "--dir", tmp_path, "--weights")
    assert out.returncode == 0
    for f in sorted(FIX.iterdir()):
        assert filecmp.cmp(f, tmp_path / f.name, shallow=False), f.name


def test_unknown_fixture_is_usage_error(tmp_path):
    out = cli("fixtures", "export", "--dir", tmp_path, "nope")
    assert out.returncode == 2 and out.stderr.startswith("error: ")


def test_malformed_model_reports_position(tmp_path):
    bad = tmp_path / "bad.cm"
    bad.write_text('{"variables": [\n  {"name": "A", "domain": "bool"},\n]}\n')
    out = cli("run", "--model", bad)
    assert out.returncode == 2
    assert f"{bad}:3:" in out.stderr


def test_missing_file_and_unknown_flag():
    assert cli("run", "--model", "/nonexistent.cm").returncode == 2
    assert cli("run", "--frobnicate").returncode == 2


def test_reports_are_deterministic(tmp_path):
    args = ("verify-abstraction", "--low", FIX / "network-N.cm", "--high", FIX / "circuit-M.cm",
            "--alignment", FIX / "alignment-N-to-M-scrambled.align", "--inputs", "all-boolean")
    a, b = cli(*args), cli(*args, "--jobs", "4")
    assert a.returncode == 1 and a.stdout == b.stdout

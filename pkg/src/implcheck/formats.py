"""File formats and report writing.

All structured files are JSON.  Numbers may be written as JSON numbers
(decimals are read exactly, so 0.99 is 99/100) or as strings such as
"99/100".  Expressions are strings in prefix form, e.g.
``"(xnor (var A1) (var A2))"``.

Model (.cm)::

    {"name": "circuit-M",
     "variables": [{"name": "A1", "domain": "bool"}, {"name": "Y", "domain": "real"},
                   {"name": "K", "domain": {"finite": [0, 1, 2]}}],
     "inputs": ["A1"],
     "defaults": {"A1": 0},
     "mechanisms": {"B1": "(xnor (var A1) (var A2))", ...}}

``defaults`` gives parentless variables their constant value; a
parentless variable may instead carry a constant mechanism.

Alignment (.align)::

    {"cells": {"B1": ["H1_1", "H1_2"]}, "maps": {"B1": "(eq (var H1_1) (var H1_2))"},
     "support": {"B1": [[0, 0], [1, 0]]}}      # support optional; a null map is induced

Translation (.tr)::

    {"source": [...variables...], "target": [...variables...],
     "forward": {"B1": "(var D1)"}, "inverse": {"D1": "(var B1)"}}

or, for a rotation of a layer, ``{"linear": {"layer": [...], "names": [...],
"matrix": [[...]], "tolerance": 1e-7}}`` (needs the source model).

Interventional (.iv): ``{"hard": {"B1": 1}}``, ``{"replace": {"D1": "(const 1)"}}``
or ``{"compose": [iv, iv, ...]}``.

Input list: a JSON list of assignments.

Weights (.weights, plain text)::

    # comments and blank lines are ignored
    matrix W1 4 4
    1 -1 0 0
    ...
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .abstraction import Alignment
from .expr import Expr, ParseError, as_rational, const, parse, to_sexpr
from .intervene import Interventional
from .model import BOOL, REAL, CausalModel, Domain, mlp_model
from .translate import Translation

__all__ = [
    "FormatError", "load_json", "load_model", "dump_model", "load_alignment", "dump_alignment",
    "load_translation", "dump_translation", "load_interventional", "dump_interventional",
    "load_inputs", "load_weights", "dump_weights", "write_report", "render", "file_hash",
]


class FormatError(ValueError):
    """Malformed file; carries a 1-based line and column when known."""

    def __init__(self, message: str, path: str = "", line: int | None = None, column: int | None = None):
        self.path, self.line, self.column = path, line, column
        where = path
        if line is not None:
            where += f":{line}:{column}"
        super().__init__(f"{where}: {message}" if where else message)


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


class _Doc:
    """A parsed JSON document that can point back into its source text."""

    def __init__(self, path: str, text: str):
        self.path, self.text = path, text
        try:
            self.data = json.loads(text, parse_float=Fraction)
        except json.JSONDecodeError as exc:
            raise FormatError(exc.msg, path, exc.lineno, exc.colno) from None

    def fail(self, message: str, near: str | None = None) -> FormatError:
        if near is not None:
            k = self.text.find(json.dumps(near)[1:-1])
            if k >= 0:
                return FormatError(message, self.path, *_position(self.text, k))
        return FormatError(message, self.path)

    def expr(self, text: Any, what: str) -> Expr:
        if not isinstance(text, str):
            raise self.fail(f"{what}: expression must be a string")
        try:
            return parse(text)
        except ParseError as exc:
            k = self.text.find(json.dumps(text)[1:-1])
            if k >= 0:
                line, col = _position(self.text, k + exc.pos)
                raise FormatError(f"{what}: {exc.args[0]}", self.path, line, col) from None
            raise FormatError(f"{what}: {exc}", self.path) from None

    def get(self, obj: Mapping, key: str, kind: type, what: str):
        if not isinstance(obj, Mapping) or key not in obj:
            raise self.fail(f"{what}: missing field {key!r}")
        val = obj[key]
        if not isinstance(val, kind):
            raise self.fail(f"{what}: field {key!r} has the wrong type", key)
        return val


def _read(path: str | os.PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc.strerror}", str(path)) from None


def load_json(path) -> Any:
    return _Doc(str(path), _read(path)).data


def _number(doc: _Doc, v, what: str) -> Fraction:
    if isinstance(v, bool) or not isinstance(v, (int, Fraction, str)):
        raise doc.fail(f"{what}: not a number: {v!r}")
    try:
        return as_rational(Fraction(v) if isinstance(v, str) else v)
    except (ValueError, ZeroDivisionError):
        raise doc.fail(f"{what}: not a number: {v!r}", v if isinstance(v, str) else None) from None


def _plain_number(q) -> Any:
    q = as_rational(q)
    return q.numerator if q.denominator == 1 else str(q)


# -- variables and models ------------------------------------------------------

def _domain(doc: _Doc, spec, what: str) -> Domain:
    if spec == "bool":
        return BOOL
    if spec == "real":
        return REAL
    if isinstance(spec, Mapping) and "finite" in spec and isinstance(spec["finite"], list):
        try:
            return Domain("finite", tuple(_number(doc, v, what) for v in spec["finite"]))
        except ValueError as exc:
            raise doc.fail(f"{what}: {exc}") from None
    raise doc.fail(f"{what}: unknown domain {spec!r}")


def _dump_domain(d: Domain):
    if d.kind == "finite":
        return {"finite": [_plain_number(v) for v in d.values]}
    return d.kind


def _variables(doc: _Doc, items, what: str) -> list[tuple[str, Domain]]:
    if not isinstance(items, list):
        raise doc.fail(f"{what} must be a list")
    out = []
    for item in items:
        name = doc.get(item, "name", str, what)
        out.append((name, _domain(doc, item.get("domain", "bool"), f"{what} {name}")))
    return out


def _dump_variables(pairs) -> list[dict]:
    return [{"name": n, "domain": _dump_domain(d)} for n, d in pairs]


def load_model(path) -> CausalModel:
    """Read a .cm model file, or a .weights file as a ReLU network."""
    if str(path).endswith(".weights"):
        mats = load_weights(path)
        return network_from_weights([m for _, m in mats], name=Path(path).stem)
    doc = _Doc(str(path), _read(path))
    data = doc.data
    if not isinstance(data, Mapping):
        raise FormatError("model file must hold a JSON object", str(path), 1, 1)
    variables = _variables(doc, doc.get(data, "variables", list, "model"), "variable")
    mech_src = doc.get(data, "mechanisms", Mapping, "model")
    mech = {n: doc.expr(e, f"mechanism of {n}") for n, e in mech_src.items()}
    defaults = data.get("defaults") or {}
    if not isinstance(defaults, Mapping):
        raise doc.fail("defaults must be an object", "defaults")
    for n, v in defaults.items():
        if n in mech:
            raise doc.fail(f"{n} has both a default and a mechanism", n)
        mech[n] = const(_number(doc, v, f"default of {n}"))
    inputs = data.get("inputs")
    if inputs is not None and not (isinstance(inputs, list) and all(isinstance(i, str) for i in inputs)):
        raise doc.fail("inputs must be a list of names", "inputs")
    try:
        return CausalModel(variables, mech, inputs=inputs, name=str(data.get("name", "")))
    except (ValueError, KeyError) as exc:
        raise doc.fail(f"invalid model: {exc}") from None


def dump_model(model: CausalModel) -> dict:
    return {
        "name": model.name,
        "variables": _dump_variables(model.variables_with_domains()),
        "inputs": list(model.inputs),
        "defaults": {v: _plain_number(model.mechanism(v).value) for v in model.variables
                     if model.mechanism(v).op == "const"},
        "mechanisms": {v: to_sexpr(model.mechanism(v)) for v in model.variables
                       if model.mechanism(v).op != "const"},
    }


# -- alignments and translations -------------------------------------------------

def load_alignment(path) -> Alignment:
    doc = _Doc(str(path), _read(path))
    data = doc.data
    cells = doc.get(data, "cells", Mapping, "alignment")
    maps_src = doc.get(data, "maps", Mapping, "alignment")
    maps = {x: None if e is None else doc.expr(e, f"map of {x}") for x, e in maps_src.items()}
    support = {}
    for x, rows in (data.get("support") or {}).items():
        support[x] = tuple(tuple(_number(doc, v, f"support of {x}") for v in row) for row in rows)
    try:
        return Alignment({x: tuple(c) for x, c in cells.items()}, maps, support)
    except ValueError as exc:
        raise doc.fail(f"invalid alignment: {exc}") from None


def dump_alignment(alignment: Alignment) -> dict:
    out = {
        "cells": {x: list(c) for x, c in alignment.cells.items()},
        "maps": {x: None if m is None else to_sexpr(m) for x, m in alignment.maps.items()},
    }
    if alignment.support:
        out["support"] = {x: [[_plain_number(v) for v in row] for row in rows]
                          for x, rows in alignment.support.items()}
    return out


def load_translation(path, model: CausalModel | None = None) -> Translation:
    doc = _Doc(str(path), _read(path))
    data = doc.data
    if isinstance(data, Mapping) and "linear" in data:
        lin = data["linear"]
        if model is None:
            raise doc.fail("a linear translation needs the source model", "linear")
        matrix = [[_number(doc, v, "matrix entry") for v in row] for row in doc.get(lin, "matrix", list, "linear")]
        try:
            return Translation.linear(model, doc.get(lin, "layer", list, "linear"),
                                      doc.get(lin, "names", list, "linear"), matrix)
        except ValueError as exc:
            raise doc.fail(f"invalid translation: {exc}") from None
    source = _variables(doc, doc.get(data, "source", list, "translation"), "source variable")
    target = _variables(doc, doc.get(data, "target", list, "translation"), "target variable")
    fwd = {k: doc.expr(e, f"forward map of {k}") for k, e in doc.get(data, "forward", Mapping, "translation").items()}
    inv = {k: doc.expr(e, f"inverse map of {k}") for k, e in doc.get(data, "inverse", Mapping, "translation").items()}
    try:
        return Translation(source, target, fwd, inv)
    except ValueError as exc:
        raise doc.fail(f"invalid translation: {exc}") from None


def dump_translation(t: Translation, tolerance: float | None = None) -> dict:
    if t.linear_form is not None:
        layer, names, matrix = t.linear_form
        lin = {"layer": list(layer), "names": list(names),
               "matrix": [[_plain_number(v) for v in row] for row in matrix]}
        if tolerance is not None:
            lin["tolerance"] = tolerance
        return {"linear": lin}
    return {
        "source": _dump_variables(t.source),
        "target": _dump_variables(t.target),
        "forward": {k: to_sexpr(e) for k, e in t.forward.items()},
        "inverse": {k: to_sexpr(e) for k, e in t.inverse.items()},
    }


# -- interventionals and inputs ------------------------------------------------

def _iv(doc: _Doc, spec) -> Interventional:
    if not isinstance(spec, Mapping) or len(spec) != 1:
        raise doc.fail("interventional must be an object with one of hard/replace/compose")
    (kind, body), = spec.items()
    if kind == "hard" and isinstance(body, Mapping):
        return Interventional.hard({k: _number(doc, v, f"value of {k}") for k, v in body.items()})
    if kind == "replace" and isinstance(body, Mapping):
        return Interventional.replace({k: doc.expr(e, f"replacement for {k}") for k, e in body.items()})
    if kind == "compose" and isinstance(body, list):
        return Interventional.compose(*[_iv(doc, p) for p in body])
    raise doc.fail(f"unknown interventional form {kind!r}", kind)


def load_interventional(path) -> Interventional:
    doc = _Doc(str(path), _read(path))
    return _iv(doc, doc.data)


def dump_interventional(iv: Interventional) -> dict:
    if iv.is_hard:
        return {"hard": {k: _plain_number(v) for k, v in iv.values.items()}}
    return {"replace": {k: to_sexpr(e) for k, e in iv.replacements}}


def load_inputs(path) -> list[dict]:
    doc = _Doc(str(path), _read(path))
    if not isinstance(doc.data, list) or not all(isinstance(x, Mapping) for x in doc.data):
        raise doc.fail("input file must hold a list of assignments")
    return [{k: _number(doc, v, f"input {k}") for k, v in x.items()} for x in doc.data]


# -- weights ---------------------------------------------------------------

_HEADER = re.compile(r"^matrix\s+(\S+)\s+(\d+)\s+(\d+)\s*$")


def load_weights(path) -> list[tuple[str, list[list[Fraction]]]]:
    """Read named matrices from the plain-text weights format."""
    text = _read(path)
    mats: list[tuple[str, list[list[Fraction]]]] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = lines[i].split("#", 1)[0].strip()
        i += 1
        if not raw:
            continue
        m = _HEADER.match(raw)
        if not m:
            raise FormatError("expected 'matrix <name> <rows> <cols>'", str(path), i, 1)
        name, rows, cols = m.group(1), int(m.group(2)), int(m.group(3))
        body = []
        while len(body) < rows:
            if i >= len(lines):
                raise FormatError(f"matrix {name} ends after {len(body)} of {rows} rows", str(path), i, 1)
            line = lines[i].split("#", 1)[0].strip()
            i += 1
            if not line:
                continue
            cells = line.split()
            if len(cells) != cols:
                raise FormatError(f"matrix {name} row has {len(cells)} entries, expected {cols}", str(path), i, 1)
            try:
                body.append([as_rational(Fraction(c)) for c in cells])
            except (ValueError, ZeroDivisionError):
                raise FormatError(f"bad number in matrix {name}", str(path), i, 1) from None
        mats.append((name, body))
    if not mats:
        raise FormatError("no matrices found", str(path))
    return mats


def dump_weights(named: Sequence[tuple[str, Sequence[Sequence]]]) -> str:
    out = []
    for name, m in named:
        out.append(f"matrix {name} {len(m)} {len(m[0])}")
        out.extend(" ".join(str(_plain_number(v)) for v in row) for row in m)
    return "\n".join(out) + "\n"


def network_from_weights(mats: Sequence[Sequence[Sequence]], name: str = "") -> CausalModel:
    """ReLU network with inputs X1.., hidden layers Hk_i and outputs Y (or Y1..)."""
    if not mats:
        raise ValueError("need at least one weight matrix")
    layers = [[f"X{i + 1}" for i in range(len(mats[0]))]]
    for k, m in enumerate(mats[:-1]):
        layers.append([f"H{k + 1}_{i + 1}" for i in range(len(m[0]))])
    n_out = len(mats[-1][0])
    layers.append(["Y"] if n_out == 1 else [f"Y{i + 1}" for i in range(n_out)])
    return mlp_model(mats, layers, name=name)


# -- reports ------------------------------------------------------------------

def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def render(payload: Mapping) -> str:
    """Stable JSON text: fields in insertion order, two-space indent."""
    return json.dumps(payload, indent=2, ensure_ascii=False, default=_default) + "\n"


def _default(o):
    if isinstance(o, Fraction):
        return _plain_number(o)
    if isinstance(o, Expr):
        return to_sexpr(o)
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(path, command: str, body: Mapping, files: Mapping[str, str] | None = None) -> str:
    """Wrap ``body`` with tool version and input hashes and write it atomically."""
    payload = {
        "tool": {"name": "implcheck", "version": __version__},
        "command": command,
        "files": {role: {"path": str(p), "sha256": file_hash(p)} for role, p in (files or {}).items()},
        **body,
    }
    text = render(payload)
    if path is not None:
        write_atomic(path, text)
    return text

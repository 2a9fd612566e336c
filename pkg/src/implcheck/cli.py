"""Command-line front end.

Exit codes: 0 pass, 1 fail (the report carries witnesses), 2 usage or
parse error.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from . import formats as fm
from .abstraction import AlignmentError, check_abstraction_under_translation, check_constructive_abstraction
from .audit import PropertySpec, audit_all
from .expr import ParseError, parse
from .intervene import apply
from .model import CausalModel, CycleError, InvalidModel, run, validate
from .translate import NonBijective, check_family_commutation, check_translation, translate_model

JOBS_ENV = "IMPLCHECK_JOBS"


class UsageError(Exception):
    pass


def _jobs(value: str | None) -> int:
    raw = value if value is not None else os.environ.get(JOBS_ENV, "1")
    if raw == "max":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"--jobs must be a positive integer or 'max', got {raw!r}") from None
    if n < 1:
        raise UsageError("--jobs must be at least 1")
    return n


def select_inputs(selector: str | None, model: CausalModel) -> list[dict]:
    """Input space from ``all-boolean`` or ``file:<path>``."""
    if selector is None or selector == "all-boolean":
        doms = [model.domain(v) for v in model.inputs]
        if not all(d.is_finite for d in doms):
            raise UsageError("all-boolean needs finite input domains")
        if selector == "all-boolean" and not all(d.kind == "bool" for d in doms):
            raise UsageError("all-boolean needs boolean inputs")
        # first input varies fastest
        combos = itertools.product(*(d.values for d in reversed(doms)))
        return [dict(zip(model.inputs, reversed(c))) for c in combos]
    if selector.startswith("file:"):
        return fm.load_inputs(selector[len("file:"):])
    raise UsageError(f"unknown input selector {selector!r}; use all-boolean or file:<path>")


def _emit(args, command: str, body: dict, files: dict, verdict: str | None) -> int:
    text = fm.write_report(args.output, command, body, files)
    if args.output is None:
        sys.stdout.write(text)
    elif verdict is not None:
        print(f"{command}: {verdict} (report: {args.output})")
    if verdict is None:
        return 0
    return 0 if verdict == "pass" else 1


def _values(d: dict) -> dict:
    return json.loads(fm.render(d))


# -- verbs -------------------------------------------------------------------

def cmd_run(args) -> int:
    model = fm.load_model(args.model)
    problems = validate(model)
    if problems:
        raise InvalidModel(problems)
    if args.inputs is None:
        values = run(model)
        print(json.dumps(_values(values)))
        if args.output:
            fm.write_report(args.output, "run", {"runs": [{"input": {}, "values": values}]}, {"model": args.model})
        return 0
    runs = [{"input": x, "values": run(model, x)} for x in select_inputs(args.inputs, model)]
    return _emit(args, "run", {"runs": runs}, {"model": args.model}, None)


def cmd_intervene(args) -> int:
    model = fm.load_model(args.model)
    iv = fm.load_interventional(args.intervention)
    changed = apply(iv, model)
    if args.emit_model:
        fm.write_atomic(args.emit_model, fm.render(fm.dump_model(changed)))
    inputs = [{}] if args.inputs is None else select_inputs(args.inputs, model)
    runs = [{"input": x, "values": run(changed, {k: v for k, v in x.items() if k not in iv.targets})}
            for x in inputs]
    if args.inputs is None and args.output is None:
        print(json.dumps(_values(runs[0]["values"])))
        return 0
    body = {"interventional": fm.dump_interventional(iv), "runs": runs}
    return _emit(args, "intervene", body, {"model": args.model, "intervention": args.intervention}, None)


def _targets(raw: str | None):
    return None if raw is None else [t for t in raw.split(",") if t]


def cmd_verify_abstraction(args) -> int:
    low, high = fm.load_model(args.low), fm.load_model(args.high)
    alignment = fm.load_alignment(args.alignment)
    inputs = select_inputs(args.inputs, low)
    report = check_constructive_abstraction(low, high, alignment, inputs, _targets(args.targets), args.depth,
                                            jobs=_jobs(args.jobs))
    files = {"low": args.low, "high": args.high, "alignment": args.alignment}
    return _emit(args, "verify-abstraction", {"report": report.to_dict()}, files, report.verdict)


def cmd_verify_translation(args) -> int:
    model = fm.load_model(args.model)
    t = fm.load_translation(args.translation, model)
    inputs = select_inputs(args.inputs, model)
    against = fm.load_model(args.against) if args.against else None
    report = check_translation(model, t, inputs, against, _targets(args.targets))
    comm = check_family_commutation(t, model, inputs, _targets(args.targets))
    translated = translate_model(model, t, inputs=inputs)
    if args.emit_model:
        fm.write_atomic(args.emit_model, fm.render(fm.dump_model(translated)))
    verdict = "pass" if report.passed and comm.passed else "fail"
    body = {"verdict": verdict, "report": report.to_dict(), "commutation": comm.to_dict(),
            "translated_model": fm.dump_model(translated)}
    files = {"model": args.model, "translation": args.translation}
    if args.against:
        files["against"] = args.against
    return _emit(args, "verify-translation", body, files, verdict)


def cmd_verify_aut(args) -> int:
    low, high = fm.load_model(args.low), fm.load_model(args.high)
    t = fm.load_translation(args.translation, low)
    alignment = fm.load_alignment(args.alignment)
    inputs = select_inputs(args.inputs, low)
    mode = _mode(args.tolerance)
    report = check_abstraction_under_translation(low, high, t, alignment, inputs, _targets(args.targets), args.depth,
                                                 mode=mode, jobs=_jobs(args.jobs))
    files = {"low": args.low, "high": args.high, "translation": args.translation, "alignment": args.alignment}
    return _emit(args, "verify-aut", {"report": report.to_dict()}, files, report.verdict)


def _mode(tolerance: float | None):
    from .expr import EXACT, Approx
    return EXACT if tolerance is None else Approx(tolerance, max(1e-4, tolerance * 10))


def cmd_audit(args) -> int:
    base = Path(".")
    req = {}
    if args.request:
        req = fm.load_json(args.request)
        if not isinstance(req, dict):
            raise fm.FormatError("audit request must be a JSON object", args.request)
        base = Path(args.request).parent

    def pick(flag, key):
        v = getattr(args, flag)
        if v is None and key in req:
            v = str(base / req[key]) if key in ("low", "high", "alignment") else req[key]
        if v is None:
            raise UsageError(f"audit needs --{flag.replace('_', '-')} (or '{key}' in the request)")
        return v

    low_p, high_p, al_p = pick("low", "low"), pick("high", "high"), pick("alignment", "alignment")
    vehicle = pick("vehicle", "vehicle")
    prop_raw = args.property if args.property is not None else req.get("property")
    if prop_raw is None:
        raise UsageError("audit needs --property (or 'property' in the request)")
    if isinstance(prop_raw, dict):
        prop = PropertySpec(str(prop_raw.get("name", "P")), parse(prop_raw["expr"]))
    else:
        prop = PropertySpec(args.property_name, parse(prop_raw))
    low, high = fm.load_model(low_p), fm.load_model(high_p)
    alignment = fm.load_alignment(al_p)
    inputs = select_inputs(args.inputs or req.get("inputs"), low)
    report = audit_all(low, high, alignment, vehicle, prop, inputs)
    body = report.to_dict()
    verdicts = [body[k]["verdict"] for k in ("information", "use", "misrepresentation")]
    verdict = "pass" if all(v == "pass" for v in verdicts) else "fail"
    files = {"low": low_p, "high": high_p, "alignment": al_p}
    if args.request:
        files["request"] = args.request
    return _emit(args, "audit", {"verdict": verdict, "audit": body}, files, verdict)


def cmd_search(args) -> int:
    from .search import SearchConfig, search
    model, high = fm.load_model(args.model), fm.load_model(args.high)
    raw = fm.load_json(args.config)
    if not isinstance(raw, dict):
        raise fm.FormatError("search config must be a JSON object", args.config)
    try:
        cfg = SearchConfig(
            layer=raw["layer"], cells=raw["cells"], input_map=raw["input_map"], output=raw["output"],
            output_map=parse(raw["output_map"]), high_output=raw["high_output"],
            budget=int(args.budget if args.budget is not None else raw.get("budget", 5000)),
            seed=int(args.seed if args.seed is not None else raw.get("seed", 0)),
            tol=float(raw.get("tol", 1e-16)), threshold_tol=float(raw.get("threshold_tol", 1e-7)),
        )
    except KeyError as exc:
        raise fm.FormatError(f"search config misses field {exc.args[0]!r}", args.config) from None
    inputs = None if args.inputs is None else select_inputs(args.inputs, model)
    result = search(model, high, cfg, inputs, jobs=_jobs(args.jobs))
    if args.emit_translation and result.translation is not None:
        tol = None if result.exact else cfg.threshold_tol
        fm.write_atomic(args.emit_translation, fm.render(fm.dump_translation(result.translation, tol)))
    body = result.to_dict()
    body.pop("seconds", None)
    verdict = "pass" if result.certified else "fail"
    files = {"model": args.model, "high": args.high, "config": args.config}
    return _emit(args, "search-alignment", {"verdict": verdict, "search": body}, files, verdict)


def cmd_fixtures(args) -> int:
    from . import fixtures as fx
    from .model import CausalModel as _CM
    from .abstraction import Alignment
    from .translate import Translation
    out = Path(args.dir)
    names = args.names or list(fx.CATALOG)
    written = []
    for name in names:
        try:
            obj = fx.build(name)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        if isinstance(obj, _CM):
            path, data = out / f"{name}.cm", fm.dump_model(obj)
        elif isinstance(obj, Alignment):
            path, data = out / f"{name}.align", fm.dump_alignment(obj)
        elif isinstance(obj, Translation):
            path, data = out / f"{name}.tr", fm.dump_translation(obj)
        else:  # pragma: no cover
            continue
        fm.write_atomic(path, fm.render(data))
        written.append(str(path))
    if args.weights:
        path = out / "network-N.weights"
        fm.write_atomic(path, fm.dump_weights([("W1", fx.W1), ("W2", fx.W2), ("W3", fx.W3)]))
        written.append(str(path))
    for p in written:
        print(p)
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="implcheck", description="Verify causal abstraction claims between models.")
    p.add_argument("--version", action="version", version=f"implcheck {__version__}")
    sub = p.add_subparsers(dest="verb", required=True, metavar="VERB")

    def common(sp, inputs=True, jobs=False):
        sp.add_argument("--output", "-o", help="write the report here (atomically) instead of stdout")
        if inputs:
            sp.add_argument("--inputs", help="input space: all-boolean or file:<path>")
        if jobs:
            sp.add_argument("--jobs", help=f"worker threads, or 'max' (default ${JOBS_ENV} or 1)")

    sp = sub.add_parser("run", help="solve a model")
    sp.add_argument("--model", required=True)
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("intervene", help="apply an interventional and solve")
    sp.add_argument("--model", required=True)
    sp.add_argument("--intervention", required=True)
    sp.add_argument("--emit-model", help="also write the intervened model")
    common(sp)
    sp.set_defaults(func=cmd_intervene)

    sp = sub.add_parser("verify-abstraction", help="check a constructive abstraction")
    sp.add_argument("--low", required=True)
    sp.add_argument("--high", required=True)
    sp.add_argument("--alignment", required=True)
    sp.add_argument("--targets", help="comma-separated high-level targets (default: intermediates)")
    sp.add_argument("--depth", type=int, default=3)
    common(sp, jobs=True)
    sp.set_defaults(func=cmd_verify_abstraction)

    sp = sub.add_parser("verify-translation", help="check a translation and its pull-backs")
    sp.add_argument("--model", required=True)
    sp.add_argument("--translation", required=True)
    sp.add_argument("--against", help="model the translation should reproduce")
    sp.add_argument("--targets")
    sp.add_argument("--emit-model", help="also write the translated model")
    common(sp)
    sp.set_defaults(func=cmd_verify_translation)

    sp = sub.add_parser("verify-aut", help="check an abstraction under translation")
    sp.add_argument("--low", required=True)
    sp.add_argument("--high", required=True)
    sp.add_argument("--translation", required=True)
    sp.add_argument("--alignment", required=True)
    sp.add_argument("--targets")
    sp.add_argument("--depth", type=int, default=3)
    sp.add_argument("--tolerance", type=float, help="compare with this tolerance instead of exactly")
    common(sp, jobs=True)
    sp.set_defaults(func=cmd_verify_aut)

    sp = sub.add_parser("audit", help="information / use / misrepresentation audit of a vehicle")
    sp.add_argument("--request", help="audit request file")
    sp.add_argument("--low")
    sp.add_argument("--high")
    sp.add_argument("--alignment")
    sp.add_argument("--vehicle")
    sp.add_argument("--property", help="property expression over inputs")
    sp.add_argument("--property-name", default="P")
    common(sp)
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("search-alignment", help="search a layer rotation")
    sp.add_argument("--model", required=True)
    sp.add_argument("--high", required=True)
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--budget", type=int)
    sp.add_argument("--emit-translation", help="write the found rotation as a translation file")
    common(sp, jobs=True)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("fixtures", help="fixture catalog")
    fsub = sp.add_subparsers(dest="action", required=True, metavar="ACTION")
    ex = fsub.add_parser("export", help="write catalog objects to files")
    ex.add_argument("--dir", required=True)
    ex.add_argument("--weights", action="store_true", help="also write the network weights file")
    ex.add_argument("names", nargs="*")
    ex.set_defaults(func=cmd_fixtures)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except fm.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"error: line {exc.line}, column {exc.column}: {exc.args[0]}", file=sys.stderr)
        return 2
    except CycleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, InvalidModel, AlignmentError, NonBijective, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

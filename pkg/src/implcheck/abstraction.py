"""Exact transformations and constructive abstraction checks."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .expr import EXACT, Expr, MarginViolation, and_, const, eq, evaluate, free_vars, or_, var
from .intervene import Interventional, apply
from .model import CausalModel, run

__all__ = [
    "Alignment", "Witness", "VerificationReport", "AlignmentError",
    "tau_of", "induce_maps", "check_exact_transformation", "check_constructive_abstraction",
    "check_abstraction_under_translation", "replay", "rename_map",
]


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class Alignment:
    """Cells of low-level variables plus a component map per high variable.

    ``maps[X]`` is an expression over the variables of ``cells[X]``; ``None``
    asks :func:`induce_maps` to build it from realized values.  ``support``
    optionally restricts a map to the listed cell values, making it partial.
    Low-level variables outside every cell are forgotten.
    """

    cells: Mapping[str, tuple[str, ...]]
    maps: Mapping[str, Expr | None]
    support: Mapping[str, tuple[tuple, ...]] = field(default_factory=dict)

    def __post_init__(self):
        cells = {x: tuple(c) for x, c in self.cells.items()}
        maps = {x: self.maps.get(x) for x in cells}
        extra = set(self.maps) - set(cells)
        if extra:
            raise AlignmentError(f"maps without cells: {', '.join(sorted(extra))}")
        seen: dict[str, str] = {}
        for x, cell in cells.items():
            if not cell:
                raise AlignmentError(f"empty cell for {x}")
            for v in cell:
                if v in seen:
                    raise AlignmentError(f"{v} is in the cells of both {seen[v]} and {x}")
                seen[v] = x
            m = maps[x]
            if m is not None:
                stray = set(free_vars(m)) - set(cell)
                if stray:
                    raise AlignmentError(f"map for {x} reads {', '.join(sorted(stray))} outside its cell")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "support", {x: tuple(tuple(r) for r in s) for x, s in self.support.items()})

    @classmethod
    def identity(cls, model: CausalModel, variables: Sequence[str] | None = None) -> "Alignment":
        names = model.variables if variables is None else variables
        return cls({v: (v,) for v in names}, {v: var(v) for v in names})

    def cell_of(self, low_var: str) -> str | None:
        for x, cell in self.cells.items():
            if low_var in cell:
                return x
        return None

    def tau(self, assignment: Mapping, mode=EXACT) -> tuple[dict, list]:
        return tau_of(self, assignment, mode)


def tau_of(alignment: Alignment, low: Mapping, mode=EXACT) -> tuple[dict, list]:
    """Apply each component map to its cell.

    Returns the partial high-level assignment and the high variables left
    undefined (cell value outside a partial map's support).
    """
    out: dict = {}
    undefined: list[str] = []
    for x, cell in alignment.cells.items():
        m = alignment.maps[x]
        if m is None:
            raise AlignmentError(f"no component map for {x}; call induce_maps first")
        vals = tuple(low[v] for v in cell)
        sup = alignment.support.get(x)
        if sup is not None and not any(all(mode.same(a, b) for a, b in zip(vals, row)) for row in sup):
            undefined.append(x)
            continue
        out[x] = evaluate(m, dict(zip(cell, vals)), mode)
    return out, undefined


def rename_map(mapping: Mapping[str, str]) -> Callable[[Mapping], tuple[dict, list]]:
    """Settings map that copies low variables to high variables by name."""

    def tau(assignment: Mapping) -> tuple[dict, list]:
        return {h: assignment[l] for l, h in mapping.items()}, []

    return tau


def _table_map(cell: Sequence[str], rows: Sequence[tuple[tuple, object]]) -> Expr:
    """Expression taking value ``v`` exactly on the listed cell values."""
    from .expr import as_rational

    def guard(values):
        parts = [eq(var(n), const(as_rational(x))) for n, x in zip(cell, values)]
        return parts[0] if len(parts) == 1 else and_(*parts)

    boolean = all(v in (0, 1) for _, v in rows)
    if boolean:
        ones = [guard(vals) for vals, v in rows if v == 1]
        if not ones:
            return const(0)
        return ones[0] if len(ones) == 1 else or_(*ones)
    from .expr import add, mul
    terms = [mul(const(as_rational(v)), guard(vals)) for vals, v in rows if v != 0]
    if not terms:
        return const(0)
    return terms[0] if len(terms) == 1 else add(*terms)


def induce_maps(alignment: Alignment, low: CausalModel, high: CausalModel,
                inputs: Sequence[Mapping], mode=EXACT) -> Alignment:
    """Fill in missing component maps from the realized values on ``inputs``.

    A missing map becomes the table sending each realized cell value to the
    value its high variable takes on the same input; its support is the set
    of realized values.  Raises AlignmentError when one realized cell value
    would need two different high values.
    """
    missing = [x for x, m in alignment.maps.items() if m is None]
    if not missing:
        return alignment
    known = Alignment({x: c for x, c in alignment.cells.items() if alignment.maps[x] is not None},
                      {x: m for x, m in alignment.maps.items() if m is not None}, alignment.support)
    rows: dict[str, list[tuple[tuple, object]]] = {x: [] for x in missing}
    for x_in in inputs:
        lr = run(low, x_in, mode)
        t, _ = tau_of(known, lr, mode)
        hr = run(high, {h: t[h] for h in high.inputs}, mode)
        for x in missing:
            vals = tuple(lr[v] for v in alignment.cells[x])
            for prev, pv in rows[x]:
                if all(mode.same(a, b) for a, b in zip(prev, vals)):
                    if not mode.same(pv, hr[x]):
                        raise AlignmentError(f"cell of {x} takes the same value on inputs with {x}={pv} "
                                             f"and {x}={hr[x]}")
                    break
            else:
                rows[x].append((vals, hr[x]))
    maps = dict(alignment.maps)
    support = dict(alignment.support)
    for x in missing:
        maps[x] = _table_map(alignment.cells[x], rows[x])
        support[x] = tuple(v for v, _ in rows[x])
    return Alignment(alignment.cells, maps, support)


# -- reports -----------------------------------------------------------------

def _plain(value):
    from fractions import Fraction
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else str(value)
    if isinstance(value, float):
        return value
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Expr):
        from .expr import to_sexpr
        return to_sexpr(value)
    return value


@dataclass
class Witness:
    """One failed check, with everything needed to re-run it."""

    kind: str
    base: Mapping
    source: Mapping | None = None
    targets: tuple = ()
    low_intervention: Mapping = field(default_factory=dict)
    low_result: Mapping = field(default_factory=dict)
    translated: Mapping = field(default_factory=dict)
    high_intervention: Mapping = field(default_factory=dict)
    high_result: Mapping = field(default_factory=dict)
    mismatched: tuple = ()
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "base": _plain(self.base),
            "source": _plain(self.source),
            "targets": list(self.targets),
            "low_intervention": _plain(self.low_intervention),
            "low_result": _plain(self.low_result),
            "translated": _plain(self.translated),
            "high_intervention": _plain(self.high_intervention),
            "high_result": _plain(self.high_result),
            "mismatched": list(self.mismatched),
            "note": self.note,
        }


@dataclass
class VerificationReport:
    name: str
    verdict: str
    checked: int
    witnesses: list[Witness] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.verdict == "fail") != bool(self.witnesses):
            raise ValueError("a report fails exactly when it carries witnesses")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def __bool__(self):
        return self.passed

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "checked": self.checked,
            "witness_count": len(self.witnesses),
            "witnesses": [w.to_dict() for w in self.witnesses],
            "details": _plain(self.details),
        }


# -- exact transformation ------------------------------------------------------

def _as_tau(tau, mode):
    if isinstance(tau, Alignment):
        return lambda a: tau_of(tau, a, mode)
    return tau


def _compare(translated: Mapping, undefined: Sequence[str], high_result: Mapping, mode,
             keys: Iterable[str] | None = None) -> tuple[str, ...]:
    bad = list(undefined)
    for x in (translated if keys is None else keys):
        if x in translated and not mode.same(translated[x], high_result[x]):
            bad.append(x)
    return tuple(bad)


def check_exact_transformation(low: CausalModel, high: CausalModel, tau, omega: Mapping[Interventional, Interventional],
                               interventionals: Iterable[Interventional], inputs: Sequence[Mapping] | None = None,
                               mode=EXACT, name: str = "exact transformation") -> VerificationReport:
    """Check tau(Run(low_i)) == Run(high_omega(i)) for every supplied i.

    ``tau`` is an :class:`Alignment` or a callable returning
    ``(partial assignment, undefined)``.  Every check is repeated on each
    input setting in ``inputs`` (or once at the model defaults); the null
    interventional is always checked but not counted.
    """
    ivs = list(interventionals)
    for i in ivs:
        if i not in omega:
            raise KeyError(f"omega is undefined on {i}")
    tau_fn = _as_tau(tau, mode)
    null = Interventional.null()
    witnesses = []
    for x in (inputs if inputs else [None]):
        for i in [null] + ivs:
            low_x = {k: v for k, v in (x or {}).items() if k not in i.targets}
            lr = run(apply(i, low), low_x, mode)
            t, undef = tau_fn(lr)
            h_in = {h: t[h] for h in high.inputs if h in t}
            j = omega.get(i, null)
            h_in = {k: v for k, v in h_in.items() if k not in j.targets}
            hr = run(apply(j, high), h_in, mode)
            bad = _compare(t, undef, hr, mode)
            if bad:
                witnesses.append(Witness("interventional", base=x or {}, low_intervention=i.mapping, low_result=lr,
                                         translated=t, high_intervention=j.mapping, high_result=hr,
                                         mismatched=bad, note=str(i)))
    checked = len(ivs) * (len(inputs) if inputs else 1)
    return VerificationReport(name, "fail" if witnesses else "pass", checked, witnesses,
                              {"interventionals": len(ivs), "inputs": len(inputs) if inputs else 0})


# -- constructive abstraction -------------------------------------------------------

def _check_alignment_fits(low: CausalModel, high: CausalModel, alignment: Alignment):
    low_vars = set(low.variables)
    for x, cell in alignment.cells.items():
        if x not in high.domains:
            raise AlignmentError(f"{x} is not a variable of the high-level model")
        for v in cell:
            if v not in low_vars:
                raise AlignmentError(f"{v} (cell of {x}) is not a low-level variable")
    missing = [x for x in high.variables if x not in alignment.cells]
    if missing:
        raise AlignmentError(f"high-level variables without a cell: {', '.join(missing)}")
    for x in high.inputs:
        if not set(alignment.cells[x]) <= set(low.inputs):
            raise AlignmentError(f"input {x} must be aligned with low-level inputs")


def default_targets(high: CausalModel) -> list[str]:
    """Intermediate high-level variables: neither inputs nor outputs."""
    outs = set(high.outputs)
    return [x for x in high.variables if x not in high.inputs and x not in outs]


def _subsets(targets: Sequence[str]) -> list[tuple[str, ...]]:
    return [c for k in range(1, len(targets) + 1) for c in itertools.combinations(targets, k)]


class _Checker:
    """Shared state for one constructive-abstraction run."""

    def __init__(self, low, high, alignment, inputs, mode):
        self.low, self.high, self.alignment, self.mode = low, high, alignment, mode
        self.inputs = list(inputs)
        self.low_runs = [run(low, x, mode) for x in self.inputs]
        self.taus = [tau_of(alignment, r, mode) for r in self.low_runs]
        self.high_inputs = []
        for t, undef in self.taus:
            missing = [h for h in high.inputs if h not in t]
            if missing:
                raise AlignmentError(f"input map undefined for {', '.join(missing)}")
            self.high_inputs.append({h: t[h] for h in high.inputs})
        self.high_runs = [run(high, h, mode) for h in self.high_inputs]
        self._cache: dict = {}

    def cellvars(self, targets):
        return tuple(v for x in targets for v in self.alignment.cells[x])

    def high_values(self, targets, vals):
        out = {}
        pos = 0
        for x in targets:
            cell = self.alignment.cells[x]
            part = dict(zip(cell, vals[pos:pos + len(cell)]))
            pos += len(cell)
            sup = self.alignment.support.get(x)
            if sup is not None and not any(all(self.mode.same(a, b) for a, b in zip(part.values(), row))
                                           for row in sup):
                return None
            out[x] = evaluate(self.alignment.maps[x], part, self.mode)
        return out

    def check(self, b: int, targets: tuple, vals: tuple):
        """Return (low_result, witness-or-None) for one patched run."""
        key = (b, targets, vals)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        cv = self.cellvars(targets)
        patch = dict(zip(cv, vals))
        try:
            lr = run(self.low, {**self.inputs[b], **patch}, self.mode)
            t, undef = tau_of(self.alignment, lr, self.mode)
            hv = self.high_values(targets, vals)
            if hv is None:
                w = Witness("outside-omega", base=self.inputs[b], targets=targets, low_intervention=patch,
                            note="patched value outside the component map's support")
                out = (lr, w)
            else:
                hr = run(self.high, {**self.high_inputs[b], **hv}, self.mode)
                bad = _compare(t, undef, hr, self.mode)
                w = None
                if bad:
                    w = Witness("interchange", base=self.inputs[b], targets=targets, low_intervention=patch,
                                low_result=lr, translated=t, high_intervention=hv, high_result=hr, mismatched=bad)
                out = (lr, w)
        except MarginViolation as exc:
            out = (None, Witness("margin", base=self.inputs[b], targets=targets, low_intervention=patch,
                                 note=str(exc)))
        self._cache[key] = out
        return out


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _constructive(low, high, alignment, inputs, targets, depth, mode, jobs, name):
    inputs = list(inputs)
    if not inputs:
        raise ValueError("input space is empty")
    _check_alignment_fits(low, high, alignment)
    alignment = induce_maps(alignment, low, high, inputs, mode)
    if targets is None:
        targets = default_targets(high)
    targets = list(targets)
    for x in targets:
        if x not in alignment.cells:
            raise AlignmentError(f"target {x} has no cell")
    try:
        ck = _Checker(low, high, alignment, inputs, mode)
    except MarginViolation as exc:
        w = Witness("margin", base={}, note=str(exc))
        return VerificationReport(name, "fail", 0, [w], {"mode": repr(mode)}), [], alignment
    n = len(inputs)
    witnesses: list[Witness] = []

    for b in range(n):
        t, undef = ck.taus[b]
        bad = _compare(t, undef, ck.high_runs[b], mode)
        if bad:
            witnesses.append(Witness("factual", base=inputs[b], low_result=ck.low_runs[b], translated=t,
                                     high_result=ck.high_runs[b], mismatched=bad))
    for x in high.variables:
        dom = high.domain(x)
        if not dom.is_finite:
            continue
        seen = [ck.taus[b][0].get(x) for b in range(n)]
        for value in dom.values:
            if not any(s is not None and mode.same(s, value) for s in seen):
                witnesses.append(Witness("surjectivity", base={}, targets=(x,),
                                         note=f"component map of {x} never yields {value} on the input space"))

    subsets = _subsets(targets)
    used: dict[tuple, None] = {}
    level_vals: dict[tuple, list[tuple]] = {}
    interchange_count = 0
    level_runs = []
    for T in subsets:
        cv = ck.cellvars(T)
        items = [(b, s, tuple(ck.low_runs[s][v] for v in cv)) for b in range(n) for s in range(n)]
        results = _map(lambda it: ck.check(it[0], T, it[2]), items, jobs)
        interchange_count += len(items)
        known = level_vals.setdefault(T, [])
        for (b, s, vals), (lr, w) in zip(items, results):
            if vals not in known:
                known.append(vals)
            used.setdefault((T, vals))
            if lr is not None:
                level_runs.append(lr)
            if w is not None:
                # cached witnesses are shared between sources, so copy before labelling
                witnesses.append(replace(w, source=inputs[s]))

    recursive_new = 0
    for _level in range(2, depth + 1):
        fresh: list[tuple[tuple, tuple]] = []
        for lr in level_runs:
            for T in subsets:
                vals = tuple(lr[v] for v in ck.cellvars(T))
                if vals not in level_vals[T]:
                    level_vals[T].append(vals)
                    fresh.append((T, vals))
        if not fresh:
            break
        items = [(b, T, vals) for T, vals in fresh for b in range(n)]
        results = _map(lambda it: ck.check(*it), items, jobs)
        recursive_new += len(items)
        level_runs = []
        for (b, T, vals), (lr, w) in zip(items, results):
            used.setdefault((T, vals))
            if lr is not None:
                level_runs.append(lr)
            if w is not None:
                witnesses.append(replace(w, kind="recursive-interchange"))

    checked = n + interchange_count + recursive_new
    details = {
        "factual": n,
        "interchange": interchange_count,
        "recursive_new": recursive_new,
        "depth": depth,
        "targets": targets,
        "target_subsets": [list(T) for T in subsets],
        "mode": repr(mode),
    }
    report = VerificationReport(name, "fail" if witnesses else "pass", checked, witnesses, details)
    interventions = [dict(zip(ck.cellvars(T), vals)) for (T, vals) in used]
    return report, interventions, alignment


def check_constructive_abstraction(low: CausalModel, high: CausalModel, alignment: Alignment,
                                   inputs: Sequence[Mapping], targets: Sequence[str] | None = None,
                                   depth: int = 3, mode=EXACT, jobs: int = 1,
                                   name: str = "constructive abstraction") -> VerificationReport:
    """Check that ``high`` is a constructive abstraction of ``low``.

    Runs every input, then every interchange intervention with base and
    source drawn from ``inputs`` and targets ranging over the nonempty
    subsets of ``targets`` (default: intermediate high-level variables),
    then recursive interchanges up to ``depth`` whenever they realize cell
    values not seen before.  Each low-level run is compared, through the
    component maps, with the high-level run under the induced intervention.
    """
    report, _, _ = _constructive(low, high, alignment, inputs, targets, depth, mode, jobs, name)
    return report


def check_abstraction_under_translation(low: CausalModel, high: CausalModel, translation, alignment: Alignment,
                                        inputs: Sequence[Mapping], targets: Sequence[str] | None = None,
                                        depth: int = 3, mode=EXACT, jobs: int = 1, verify_pullbacks: bool = True,
                                        name: str = "abstraction under translation") -> VerificationReport:
    """Translate ``low`` and check ``high`` against the translation.

    Besides the constructive-abstraction check on the translated model, each
    hard intervention it used is pulled back to ``low`` and re-checked on
    every input: forward(Run(low_pullback)) must equal the translated run.
    """
    from .translate import pull_back, translate_model
    translated = translate_model(low, translation, inputs=inputs, mode=mode)
    report, used, alignment = _constructive(translated, high, alignment, inputs, targets, depth, mode, jobs, name)
    pulled = []
    if verify_pullbacks and report.details.get("factual"):
        forward = translation.forward
        for hard_vals in used:
            hard = Interventional.hard(hard_vals)
            pb = pull_back(translation, hard, low)
            pulled.append({"high": hard_vals, "low": pb.mapping})
            low_i = apply(pb, low)
            high_i = apply(hard, translated)
            for x in inputs:
                try:
                    lr = run(low_i, x, mode)
                    tr = run(high_i, x, mode)
                    img = {tv: evaluate(forward[tv], lr, mode) for tv in forward}
                except MarginViolation as exc:
                    report.witnesses.append(Witness("margin", base=x, low_intervention=hard_vals, note=str(exc)))
                    continue
                bad = tuple(tv for tv in img if not mode.same(img[tv], tr[tv]))
                if bad:
                    report.witnesses.append(Witness("pullback", base=x, low_intervention=pb.mapping,
                                                    low_result=lr, translated=img, high_intervention=hard_vals,
                                                    high_result=tr, mismatched=bad))
        report.checked += len(used) * len(inputs)
    report.details["pullbacks"] = pulled
    report.details["pullback_checks"] = len(used) * len(inputs) if verify_pullbacks else 0
    report.details["component_maps"] = {x: m for x, m in alignment.maps.items()}
    report.verdict = "fail" if report.witnesses else "pass"
    return report


def replay(low: CausalModel, high: CausalModel, alignment: Alignment, witness: Witness, mode=EXACT) -> bool:
    """Re-execute a factual or interchange witness; True if it still fails."""
    lr = run(low, {**witness.base, **witness.low_intervention}, mode)
    t, undef = tau_of(alignment, lr, mode)
    h_in = {h: t[h] for h in high.inputs}
    hv = dict(witness.high_intervention)
    if witness.kind != "factual" and not hv:
        ck = _Checker(low, high, alignment, [witness.base], mode)
        hv = ck.high_values(tuple(witness.targets), tuple(witness.low_intervention.values())) or {}
    hr = run(high, {**h_in, **hv}, mode)
    return bool(_compare(t, undef, hr, mode))

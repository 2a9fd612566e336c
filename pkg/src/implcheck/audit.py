"""Audits of a candidate vehicle: information, use, misrepresentation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .abstraction import Alignment, Witness, _plain, induce_maps, tau_of
from .expr import EXACT, Expr, MarginViolation, evaluate, free_vars, to_sexpr
from .model import CausalModel, run

__all__ = ["PropertySpec", "AuditResult", "AuditReport", "audit_information", "audit_use",
           "audit_misrepresentation", "audit_all"]


@dataclass(frozen=True)
class PropertySpec:
    """A named property of the inputs, given as an expression over them."""

    name: str
    evaluator: Expr

    def __call__(self, assignment: Mapping, mode=EXACT):
        return evaluate(self.evaluator, assignment, mode)


@dataclass
class AuditResult:
    criterion: str
    verdict: str
    evidence: list = field(default_factory=list)
    witnesses: list[Witness] = field(default_factory=list)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "verdict": self.verdict,
            "note": self.note,
            "evidence": _plain(self.evidence),
            "witnesses": [w.to_dict() for w in self.witnesses],
        }


@dataclass
class AuditReport:
    vehicle: str
    property: str
    information: AuditResult
    use: AuditResult
    misrepresentation: AuditResult

    def to_dict(self) -> dict:
        return {
            "vehicle": self.vehicle,
            "property": self.property,
            "information": self.information.to_dict(),
            "use": self.use.to_dict(),
            "misrepresentation": self.misrepresentation.to_dict(),
        }


def _needs(alignment: Alignment, vehicle: str) -> str | None:
    if vehicle not in alignment.cells:
        return f"{vehicle} has no cell in the alignment"
    return None


def _input_view(alignment: Alignment, high: CausalModel | None, low_run: Mapping, mode) -> dict:
    """Input assignment in high-level names when a high model is known."""
    if high is None:
        return dict(low_run)
    t, _ = tau_of(Alignment({h: alignment.cells[h] for h in high.inputs},
                            {h: alignment.maps[h] for h in high.inputs}), low_run, mode)
    return {**low_run, **t}


def audit_information(low: CausalModel, alignment: Alignment, vehicle: str, prop: PropertySpec,
                      inputs: Sequence[Mapping], high: CausalModel | None = None, mode=EXACT) -> AuditResult:
    """Does the vehicle's decoded value equal the property on every input?

    The property may read low-level inputs or, when ``high`` is given,
    high-level input names.  Returns the agreement table as evidence.
    """
    missing = _needs(alignment, vehicle)
    if missing:
        return AuditResult("information", "fail", note=missing,
                           witnesses=[Witness("not-aligned", base={}, targets=(vehicle,), note=missing)])
    m = alignment.maps[vehicle]
    if m is None:
        raise ValueError(f"no component map for {vehicle}")
    table = []
    witnesses = []
    for x in inputs:
        lr = run(low, x, mode)
        env = _input_view(alignment, high, lr, mode)
        p = prop(env, mode)
        t, undef = tau_of(Alignment({vehicle: alignment.cells[vehicle]}, {vehicle: m},
                                    {k: v for k, v in alignment.support.items() if k == vehicle}), lr, mode)
        value = t.get(vehicle)
        table.append({"input": dict(x), "vehicle": value, "property": p})
        if undef:
            witnesses.append(Witness("undefined", base=x, targets=(vehicle,), low_result=lr,
                                     note=f"component map of {vehicle} is undefined here"))
        elif not mode.same(value, p):
            witnesses.append(Witness("information", base=x, targets=(vehicle,), translated={vehicle: value},
                                     high_result={prop.name: p}, mismatched=(vehicle,)))
    return AuditResult("information", "fail" if witnesses else "pass", table, witnesses)


def audit_use(low: CausalModel, high: CausalModel, alignment: Alignment, vehicle: str,
              inputs: Sequence[Mapping], mode=EXACT) -> AuditResult:
    """Do interchanges on the vehicle's cell move the output as predicted?

    For every base and source input the vehicle's cell is patched with its
    value on the source; the low-level output, decoded, must equal the
    high-level output under the matching intervention on the vehicle.
    Only the task output is compared.
    """
    missing = _needs(alignment, vehicle)
    if missing is None and vehicle not in high.domains:
        missing = f"{vehicle} has no high-level counterpart (not aligned)"
    if missing:
        return AuditResult("use", "fail", note=missing,
                           witnesses=[Witness("not-aligned", base={}, targets=(vehicle,), note=missing)])
    alignment = induce_maps(alignment, low, high, inputs, mode)
    outputs = list(high.outputs)
    cell = alignment.cells[vehicle]
    runs = [run(low, x, mode) for x in inputs]
    taus = [tau_of(alignment, r, mode)[0] for r in runs]
    hin = [{h: t[h] for h in high.inputs} for t in taus]
    witnesses = []
    count = 0
    for b, x in enumerate(inputs):
        for s in range(len(inputs)):
            count += 1
            patch = {v: runs[s][v] for v in cell}
            try:
                lr = run(low, {**x, **patch}, mode)
                t, undef = tau_of(alignment, lr, mode)
            except MarginViolation as exc:
                witnesses.append(Witness("margin", base=x, source=inputs[s], low_intervention=patch, note=str(exc)))
                continue
            hv = {vehicle: taus[s][vehicle]}
            hr = run(high, {**hin[b], **hv}, mode)
            bad = tuple(o for o in outputs if o in undef or not mode.same(t.get(o), hr[o]))
            if bad:
                witnesses.append(Witness("use", base=x, source=inputs[s], targets=(vehicle,), low_intervention=patch,
                                         low_result=lr, translated=t, high_intervention=hv, high_result=hr,
                                         mismatched=bad))
    return AuditResult("use", "fail" if witnesses else "pass", [{"interchanges": count, "outputs": outputs}],
                       witnesses)


def audit_misrepresentation(low: CausalModel, high: CausalModel, alignment: Alignment, vehicle: str,
                            prop: PropertySpec, inputs: Sequence[Mapping], mode=EXACT) -> AuditResult:
    """Can the vehicle be made to misrepresent the property coherently?

    Passes with witnesses: inputs and realized cell values whose decoded
    value differs from the property on that input, such that the patched
    low-level output both changes and matches the high-level output under
    the matching (wrong) intervention.  Witnesses come in input order.
    """
    missing = _needs(alignment, vehicle)
    if missing is None and vehicle not in high.domains:
        missing = f"{vehicle} has no high-level counterpart (not aligned)"
    if missing:
        return AuditResult("misrepresentation", "fail", note=missing)
    alignment = induce_maps(alignment, low, high, inputs, mode)
    cell = alignment.cells[vehicle]
    outputs = list(high.outputs)
    runs = [run(low, x, mode) for x in inputs]
    taus = [tau_of(alignment, r, mode)[0] for r in runs]
    # realized cell values, each with the first input realizing it
    realized: list[tuple[tuple, int]] = []
    for s, r in enumerate(runs):
        vals = tuple(r[v] for v in cell)
        if not any(all(mode.same(a, b) for a, b in zip(vals, prev)) for prev, _ in realized):
            realized.append((vals, s))
    witnesses = []
    for b, x in enumerate(inputs):
        env = _input_view(alignment, high, runs[b], mode)
        p = prop(env, mode)
        hin = {h: taus[b][h] for h in high.inputs}
        for vals, s in realized:
            value = taus[s][vehicle]
            if mode.same(value, p):
                continue
            patch = dict(zip(cell, vals))
            try:
                lr = run(low, {**x, **patch}, mode)
                t, undef = tau_of(alignment, lr, mode)
            except MarginViolation:
                continue
            hr = run(high, {**hin, vehicle: value}, mode)
            coherent = all(o not in undef and mode.same(t[o], hr[o]) for o in outputs)
            flipped = any(not mode.same(t.get(o), taus[b][o]) for o in outputs)
            if coherent and flipped:
                witnesses.append(Witness("misrepresentation", base=x, source=inputs[s], targets=(vehicle,),
                                         low_intervention=patch, low_result=lr, translated=t,
                                         high_intervention={vehicle: value}, high_result=hr,
                                         note=f"{vehicle} decodes to {value} while {prop.name} is {p}; "
                                              f"output moves from {[taus[b][o] for o in outputs]} to "
                                              f"{[t[o] for o in outputs]}"))
    verdict = "pass" if witnesses else "fail"
    note = "" if witnesses else "no intervention on the vehicle changes the output coherently"
    return AuditResult("misrepresentation", verdict, [{"candidates": len(realized)}], witnesses, note)


def audit_all(low: CausalModel, high: CausalModel, alignment: Alignment, vehicle: str, prop: PropertySpec,
              inputs: Sequence[Mapping], mode=EXACT) -> AuditReport:
    full = induce_maps(alignment, low, high, inputs, mode) if vehicle in high.domains else alignment
    return AuditReport(
        vehicle=vehicle,
        property=f"{prop.name} = {to_sexpr(prop.evaluator)}",
        information=audit_information(low, full, vehicle, prop, inputs, high, mode),
        use=audit_use(low, high, alignment, vehicle, inputs, mode),
        misrepresentation=audit_misrepresentation(low, high, alignment, vehicle, prop, inputs, mode),
    )


def property_inputs(prop: PropertySpec) -> tuple[str, ...]:
    return free_vars(prop.evaluator)

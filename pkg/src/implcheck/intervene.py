"""Interventionals: hard interventions, mechanism replacement, interchange."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .expr import EXACT, Expr, as_rational, const, free_vars, to_sexpr
from .model import BOOL, CausalModel, CycleError, run

__all__ = [
    "Interventional", "InterchangeSpec", "apply", "interchange", "check_algebra_laws",
    "random_boolean_model", "random_hard", "MAX_INTERCHANGE_DEPTH",
]

MAX_INTERCHANGE_DEPTH = 3


@dataclass(frozen=True)
class Interventional:
    """A model-to-model transform that replaces mechanisms.

    Hard interventions are the case where every replacement is a constant.
    Composition applies left to right with later replacements overriding
    earlier ones on shared targets, so a composition is again a single
    replacement map.  Equality ignores the label.
    """

    replacements: tuple[tuple[str, Expr], ...] = ()
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "replacements", tuple(sorted(dict(self.replacements).items())))

    @classmethod
    def hard(cls, values: Mapping[str, object], label: str = "") -> "Interventional":
        reps = {n: const(as_rational(v)) for n, v in values.items()}
        if not label:
            label = ", ".join(f"{n}<-{v}" for n, v in sorted(values.items()))
        return cls(tuple(reps.items()), label)

    @classmethod
    def replace(cls, mechanisms: Mapping[str, Expr], label: str = "") -> "Interventional":
        if not label:
            label = ", ".join(f"F_{n}<-{to_sexpr(e)}" for n, e in sorted(mechanisms.items()))
        return cls(tuple(mechanisms.items()), label)

    @classmethod
    def null(cls) -> "Interventional":
        return cls((), "null")

    @classmethod
    def compose(cls, *parts: "Interventional", label: str = "") -> "Interventional":
        merged: dict[str, Expr] = {}
        for p in parts:
            merged.update(p.replacements)
        if not label:
            label = " ; ".join(p.label for p in parts if p.label) or "null"
        return cls(tuple(merged.items()), label)

    def then(self, other: "Interventional") -> "Interventional":
        return Interventional.compose(self, other)

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.replacements)

    @property
    def mapping(self) -> dict[str, Expr]:
        return dict(self.replacements)

    @property
    def is_hard(self) -> bool:
        return all(e.op == "const" for _, e in self.replacements)

    @property
    def values(self) -> dict:
        """Target values of a hard interventional."""
        if not self.is_hard:
            raise ValueError("not a hard intervention")
        return {n: e._num for n, e in self.replacements}

    def __call__(self, model: CausalModel) -> CausalModel:
        return apply(self, model)

    def __str__(self):
        return self.label or "{" + ", ".join(f"{n}: {to_sexpr(e)}" for n, e in self.replacements) + "}"


def apply(interventional: Interventional, model: CausalModel) -> CausalModel:
    """Return ``model`` with the targeted mechanisms replaced.

    Raises KeyError for unknown targets or variables and :class:`CycleError`
    (carrying the cycle path) when a replacement closes a loop.
    """
    if not interventional.replacements:
        return model
    declared = set(model.variables)
    for n, e in interventional.replacements:
        if n not in declared:
            raise KeyError(f"unknown target variable {n!r}")
        for p in free_vars(e):
            if p not in declared:
                raise KeyError(f"replacement for {n} references unknown variable {p!r}")
    out = model.replace(interventional.mapping)
    if not interventional.is_hard:
        out.order  # raises CycleError
    return out


@dataclass(frozen=True)
class InterchangeSpec:
    """Patch ``targets`` with the values they take on ``source``.

    ``source`` is either an input assignment or another InterchangeSpec, in
    which case the values come from that (recursive) interchange run.
    """

    base: Mapping
    source: "Mapping | InterchangeSpec"
    targets: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise ValueError("interchange needs at least one target")

    @property
    def depth(self) -> int:
        return 1 + (self.source.depth if isinstance(self.source, InterchangeSpec) else 0)


def interchange(model: CausalModel, spec: InterchangeSpec, mode=EXACT,
                max_depth: int = MAX_INTERCHANGE_DEPTH) -> dict:
    """Run ``model`` on the base input with targets fixed to source values."""
    if spec.depth > max_depth:
        raise ValueError(f"interchange depth {spec.depth} exceeds {max_depth}")
    _check_inputs(model, spec.base)
    if isinstance(spec.source, InterchangeSpec):
        source_run = interchange(model, spec.source, mode, max_depth)
    else:
        _check_inputs(model, spec.source)
        source_run = run(model, spec.source, mode)
    for t in spec.targets:
        if t not in model.domains:
            raise KeyError(f"unknown target variable {t!r}")
    patched = {t: source_run[t] for t in spec.targets}
    return run(model, {**spec.base, **patched}, mode)


def _check_inputs(model: CausalModel, assignment: Mapping):
    extra = set(assignment) - set(model.inputs)
    if extra:
        raise ValueError(f"not input variables: {', '.join(sorted(extra))}")
    missing = set(model.inputs) - set(assignment)
    if missing:
        raise ValueError(f"input assignment misses {', '.join(sorted(missing))}")


# -- intervention-algebra laws ----------------------------------------------

def random_boolean_model(rng: random.Random, max_vars: int = 8) -> CausalModel:
    """A random acyclic boolean model with 2..max_vars variables."""
    from .expr import and_, not_, or_, var, xnor
    n = rng.randint(2, max_vars)
    n_in = rng.randint(1, min(3, n - 1))
    names = [f"V{i}" for i in range(n)]
    mech: dict[str, Expr] = {}
    for i, v in enumerate(names):
        if i < n_in:
            mech[v] = const(rng.randint(0, 1))
            continue
        k = rng.randint(1, min(3, i))
        ps = [var(p) for p in rng.sample(names[:i], k)]
        gate = rng.choice(["xnor", "and", "or", "not", "copy"])
        if gate == "xnor" and len(ps) >= 2:
            mech[v] = xnor(ps[0], ps[1])
        elif gate == "and":
            mech[v] = and_(*ps)
        elif gate == "or":
            mech[v] = or_(*ps)
        elif gate == "not":
            mech[v] = not_(ps[0])
        else:
            mech[v] = ps[0] if len(ps) == 1 else xnor(ps[0], ps[-1])
    return CausalModel([(v, BOOL) for v in names], mech, inputs=names[:n_in])


def random_hard(rng: random.Random, model: CausalModel, exclude: Iterable[str] = ()) -> Interventional:
    pool = [v for v in model.variables if v not in set(exclude)]
    k = rng.randint(1, max(1, len(pool) // 2))
    chosen = rng.sample(pool, min(k, len(pool)))
    return Interventional.hard({v: rng.randint(0, 1) for v in chosen})


def check_algebra_laws(models: Sequence[CausalModel], interventionals: Sequence[Sequence[Interventional]]):
    """Check commutation, idempotence and override on hard interventions.

    ``interventionals[k]`` is the sample of hard interventions for
    ``models[k]``.  Every ordered pair is checked: disjoint pairs must
    commute, and for overlapping pairs the later intervention wins on the
    shared targets.  Each law is checked structurally and by running the
    models.  Returns a VerificationReport with the first counterexample per
    law.
    """
    from .abstraction import VerificationReport, Witness
    checked = {"commutation": 0, "idempotence": 0, "override": 0}
    first: dict[str, Witness] = {}

    def record(law, model, i, j, detail):
        if law not in first:
            first[law] = Witness(kind=law, base={}, low_intervention={"model": model.name or repr(model),
                                                                    "first": str(i), "second": str(j)},
                                 note=detail)

    for model, sample in zip(models, interventionals):
        for i in sample:
            if not i.is_hard:
                raise ValueError(f"not a hard intervention: {i}")
            once = apply(i, model)
            twice = apply(i, once)
            checked["idempotence"] += 1
            if once != twice or run(once) != run(twice):
                record("idempotence", model, i, i, "apply(i, apply(i, m)) != apply(i, m)")
        for i, j in itertools.product(sample, repeat=2):
            ij = apply(j, apply(i, model))
            shared = set(i.targets) & set(j.targets)
            if not shared:
                checked["commutation"] += 1
                ji = apply(i, apply(j, model))
                if ij != ji or run(ij) != run(ji):
                    record("commutation", model, i, j, "disjoint interventions do not commute")
            else:
                checked["override"] += 1
                jvals = j.values
                result = run(ij)
                if any(ij.mechanism(t) != const(jvals[t]) or result[t] != jvals[t] for t in shared):
                    record("override", model, i, j, "later intervention does not win")
    witnesses = [first[k] for k in ("commutation", "idempotence", "override") if k in first]
    return VerificationReport(
        name="intervention-algebra laws",
        verdict="fail" if witnesses else "pass",
        checked=sum(checked.values()),
        witnesses=witnesses,
        details={"per_law": checked, "models": len(models)},
    )

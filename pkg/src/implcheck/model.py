"""Structural causal models over boolean, finite and real variables."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .expr import EXACT, Expr, UnboundVariable, as_rational, const, evaluate, free_vars

__all__ = [
    "Domain", "BOOL", "REAL", "CausalModel", "Violation", "InvalidModel", "CycleError",
    "validate", "run", "boolean_inputs", "mlp_model",
]

# exhaustive domain checks beyond this many parent settings fall back to realized values
EXHAUSTIVE_LIMIT = 4096


@dataclass(frozen=True)
class Domain:
    """Value set of a variable: ``bool`` ({0, 1}), ``real``, or ``finite``."""

    kind: str
    values: tuple = ()

    def __post_init__(self):
        if self.kind == "bool":
            object.__setattr__(self, "values", (0, 1))
        elif self.kind == "real":
            if self.values:
                raise ValueError("real domains carry no value list")
        elif self.kind == "finite":
            vals = tuple(as_rational(v) for v in self.values)
            if not vals:
                raise ValueError("finite domain is empty")
            if list(vals) != sorted(set(vals)):
                raise ValueError("finite domain values must be sorted and duplicate-free")
            object.__setattr__(self, "values", tuple(v.numerator if v.denominator == 1 else v for v in vals))
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def finite(cls, values: Iterable) -> "Domain":
        return cls("finite", tuple(sorted({as_rational(v) for v in values})))

    @property
    def is_finite(self) -> bool:
        return self.kind != "real"

    def __contains__(self, value) -> bool:
        if self.kind == "real":
            return True
        return value in self.values

    def __str__(self):
        if self.kind == "finite":
            return "{" + ", ".join(str(v) for v in self.values) + "}"
        return self.kind


BOOL = Domain("bool")
REAL = Domain("real")


@dataclass(frozen=True)
class Violation:
    kind: str
    variables: tuple
    message: str

    def __str__(self):
        return self.message


class InvalidModel(ValueError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class CycleError(InvalidModel):
    def __init__(self, path: Sequence[str]):
        self.path = tuple(path)
        super().__init__([Violation("cycle", self.path, "cycle " + " -> ".join(self.path))])


class CausalModel:
    """An acyclic structural causal model.

    Parents are implicit: a variable's parents are the free variables of its
    mechanism.  ``inputs`` are the designated input variables (by default the
    variables whose mechanisms are constants); they keep that role after
    interventions make other variables parentless.
    """

    __slots__ = ("name", "_vars", "_domains", "_mech", "_inputs", "_order", "_hash")

    def __init__(self, variables: Sequence[tuple[str, Domain]], mechanisms: Mapping[str, Expr],
                 inputs: Sequence[str] | None = None, name: str = ""):
        self.name = name
        self._vars = tuple(n for n, _ in variables)
        self._domains = MappingProxyType({n: d for n, d in variables})
        self._mech = MappingProxyType(dict(mechanisms))
        if inputs is None:
            inputs = [n for n in self._vars if n in self._mech and not free_vars(self._mech[n])]
        self._inputs = tuple(inputs)
        self._order = None
        self._hash = None

    # -- structure ---------------------------------------------------------
    @property
    def variables(self) -> tuple[str, ...]:
        return self._vars

    @property
    def domains(self) -> Mapping[str, Domain]:
        return self._domains

    @property
    def mechanisms(self) -> Mapping[str, Expr]:
        return self._mech

    @property
    def inputs(self) -> tuple[str, ...]:
        return self._inputs

    def domain(self, name: str) -> Domain:
        return self._domains[name]

    def mechanism(self, name: str) -> Expr:
        return self._mech[name]

    def parents(self, name: str) -> tuple[str, ...]:
        return free_vars(self._mech[name])

    def children(self, name: str) -> tuple[str, ...]:
        return tuple(v for v in self._vars if name in self.parents(v))

    @property
    def outputs(self) -> tuple[str, ...]:
        """Non-input variables that no other variable reads."""
        read = {p for v in self._vars for p in self.parents(v)}
        return tuple(v for v in self._vars if v not in read and v not in self._inputs)

    def descendants(self, name: str) -> set[str]:
        out: set[str] = set()
        frontier = [name]
        while frontier:
            cur = frontier.pop()
            for c in self.children(cur):
                if c not in out:
                    out.add(c)
                    frontier.append(c)
        return out

    def ancestors(self, name: str) -> set[str]:
        out: set[str] = set()
        frontier = [name]
        while frontier:
            for p in self.parents(frontier.pop()):
                if p not in out:
                    out.add(p)
                    frontier.append(p)
        return out

    @property
    def order(self) -> tuple[str, ...]:
        """Topological order, ties broken by declaration order."""
        if self._order is None:
            self._order = _toposort(self)
        return self._order

    # -- derived models -----------------------------------------------------
    def replace(self, mechanisms: Mapping[str, Expr], name: str | None = None) -> "CausalModel":
        mech = dict(self._mech)
        mech.update(mechanisms)
        return CausalModel(self.variables_with_domains(), mech, self._inputs,
                           self.name if name is None else name)

    def with_inputs(self, values: Mapping[str, object]) -> "CausalModel":
        """Fix input variables to the given values (an input intervention)."""
        for n in values:
            if n not in self._domains:
                raise KeyError(f"unknown variable {n!r}")
        return self.replace({n: const(as_rational(v)) for n, v in values.items()})

    def variables_with_domains(self) -> list[tuple[str, Domain]]:
        return [(n, self._domains[n]) for n in self._vars]

    def __eq__(self, other):
        if not isinstance(other, CausalModel):
            return NotImplemented
        return (self._vars == other._vars and dict(self._domains) == dict(other._domains)
                and dict(self._mech) == dict(other._mech) and self._inputs == other._inputs)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._vars, tuple(self._mech.get(n) for n in self._vars), self._inputs))
        return self._hash

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<CausalModel{label} with {len(self._vars)} variables>"


def _find_cycle(model: CausalModel) -> list[str] | None:
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(v: str):
        state[v] = 1
        stack.append(v)
        for p in model.parents(v):
            if p not in model.mechanisms:
                continue
            if state.get(p) == 1:
                return stack[stack.index(p):] + [p]
            if p not in state:
                found = visit(p)
                if found:
                    return found
        stack.pop()
        state[v] = 2
        return None

    for v in model.variables:
        if v not in state and v in model.mechanisms:
            found = visit(v)
            if found:
                # report in dependence direction: parent -> child
                return list(reversed(found))
    return None


def _toposort(model: CausalModel) -> tuple[str, ...]:
    cycle = _find_cycle(model)
    if cycle:
        raise CycleError(cycle)
    rank = {n: i for i, n in enumerate(model.variables)}
    indeg = {v: 0 for v in model.variables}
    kids: dict[str, list[str]] = {v: [] for v in model.variables}
    for v in model.variables:
        for p in model.parents(v):
            if p in indeg:
                indeg[v] += 1
                kids[p].append(v)
    import heapq
    ready = [(rank[v], v) for v, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        _, v = heapq.heappop(ready)
        out.append(v)
        for c in kids[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, (rank[c], c))
    return tuple(out)


def validate(model: CausalModel) -> list[Violation]:
    """Return every broken model invariant; an empty list means valid."""
    out: list[Violation] = []
    declared = set(model.variables)
    if len(declared) != len(model.variables):
        dupes = sorted({v for v in model.variables if model.variables.count(v) > 1})
        out.append(Violation("duplicate", tuple(dupes), f"duplicate variable(s) {', '.join(dupes)}"))
    for v in model.variables:
        if v not in model.mechanisms:
            out.append(Violation("missing", (v,), f"no mechanism for {v}"))
    for v in model.mechanisms:
        if v not in declared:
            out.append(Violation("undeclared", (v,), f"mechanism for undeclared variable {v}"))
    for v in model.variables:
        if v not in model.mechanisms:
            continue
        for p in model.parents(v):
            if p not in declared:
                out.append(Violation("unknown", (v, p), f"unknown variable {p} in mechanism of {v}"))
    for v in model.inputs:
        if v not in declared:
            out.append(Violation("unknown", (v,), f"input {v} is not declared"))
    if out:
        return out
    for v in model.variables:
        if v in model.parents(v):
            out.append(Violation("cycle", (v,), f"cycle at {v}"))
    if out:
        return out
    cycle = _find_cycle(model)
    if cycle:
        return [Violation("cycle", tuple(cycle), "cycle " + " -> ".join(cycle))]
    out.extend(_domain_violations(model))
    return out


def _domain_violations(model: CausalModel) -> list[Violation]:
    out = []
    realized = None
    for v in model.variables:
        dom = model.domain(v)
        if not dom.is_finite:
            continue
        mech = model.mechanism(v)
        parents = model.parents(v)
        doms = [model.domain(p) for p in parents]
        size = 1
        for d in doms:
            size = size * len(d.values) if d.is_finite else EXHAUSTIVE_LIMIT + 1
        if size <= EXHAUSTIVE_LIMIT:
            for combo in itertools.product(*(d.values for d in doms)):
                val = evaluate(mech, dict(zip(parents, combo)))
                if val not in dom:
                    out.append(Violation("domain", (v,), f"mechanism of {v} yields {val} outside {dom} "
                                         f"at {dict(zip(parents, combo))}"))
                    break
        else:
            if realized is None:
                realized = run(model, check=False)
            if realized[v] not in dom:
                out.append(Violation("domain", (v,), f"{v} realizes {realized[v]} outside {dom}"))
    return out


def run(model: CausalModel, inputs: Mapping[str, object] | None = None, mode=EXACT,
        check: bool = False) -> dict:
    """Solve the model by evaluating mechanisms in topological order.

    ``inputs`` optionally overrides input values (an input intervention).
    With ``check=True`` the model is validated first and
    :class:`InvalidModel` is raised on any violation.
    """
    if check:
        bad = validate(model)
        if bad:
            raise InvalidModel(bad)
    env: dict = {}
    mech = model.mechanisms
    fixed = {}
    if inputs:
        for n, val in inputs.items():
            if n not in model.domains:
                raise KeyError(f"unknown variable {n!r}")
            fixed[n] = mode.coerce(val)
    try:
        for v in model.order:
            if v in fixed:
                env[v] = fixed[v]
            else:
                env[v] = evaluate(mech[v], env, mode)
    except UnboundVariable as exc:
        raise InvalidModel([Violation("unknown", (exc.name,), f"unknown variable {exc.name}")]) from None
    return {v: env[v] for v in model.variables}


def boolean_inputs(variables: Sequence[str]) -> list[dict]:
    """All 0/1 settings of ``variables``; the first variable varies fastest."""
    n = len(variables)
    return [{v: (k >> i) & 1 for i, v in enumerate(variables)} for k in range(2 ** n)]


def mlp_model(weights: Sequence[Sequence[Sequence]], layer_names: Sequence[Sequence[str]],
              input_domain: Domain = BOOL, name: str = "") -> CausalModel:
    """Feed-forward ReLU network as a causal model.

    ``layer_names[0]`` names the inputs, ``layer_names[k]`` the units of layer
    ``k``; unit ``j`` of layer ``k`` computes ``ReLU(sum_i a_i * W_k[i][j])``
    over the previous layer's values ``a``.  Zero weights are omitted.
    """
    from .expr import add, mul, relu, simplify, var
    if len(weights) != len(layer_names) - 1:
        raise ValueError("need one weight matrix per layer transition")
    variables = [(n, input_domain) for n in layer_names[0]]
    mech: dict[str, Expr] = {n: const(0) for n in layer_names[0]}
    for k, W in enumerate(weights):
        prev, cur = layer_names[k], layer_names[k + 1]
        if len(W) != len(prev) or any(len(row) != len(cur) for row in W):
            raise ValueError(f"weight matrix {k + 1} has shape mismatch")
        for j, unit in enumerate(cur):
            terms = [mul(const(as_rational(W[i][j])), var(p)) for i, p in enumerate(prev)
                     if as_rational(W[i][j]) != 0]
            body = add(*terms) if terms else const(0)
            mech[unit] = simplify(relu(body))
            variables.append((unit, REAL))
    return CausalModel(variables, mech, inputs=list(layer_names[0]), name=name)


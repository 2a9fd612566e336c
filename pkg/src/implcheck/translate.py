"""Bijective re-carvings of a model's variables and pull-backs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .expr import EXACT, Expr, MarginViolation, add, as_rational, compile_table, const, evaluate, free_vars, mul, \
    simplify, substitute, var
from .intervene import Interventional, apply
from .model import EXHAUSTIVE_LIMIT, REAL, CausalModel, Domain, run

__all__ = [
    "Translation", "NonBijective", "validate_translation", "translate_model", "pull_back",
    "intervention_family", "check_family_commutation", "check_translation", "exact_inverse",
]


class NonBijective(ValueError):
    """Two source settings share an image, or an image does not map back."""

    def __init__(self, message: str, pair: tuple = ()):
        super().__init__(message)
        self.pair = pair


def exact_inverse(matrix: Sequence[Sequence]) -> list[list[Fraction]]:
    """Inverse of a square matrix over the rationals (Gauss-Jordan)."""
    n = len(matrix)
    a = [[as_rational(x) for x in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(matrix)]
    if any(len(row) != 2 * n for row in a):
        raise ValueError("matrix is not square")
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if a[piv][col] == 0:
            raise NonBijective("matrix is singular")
        a[col], a[piv] = a[piv], a[col]
        p = a[col][col]
        a[col] = [x / p for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [row[n:] for row in a]


@dataclass(frozen=True)
class Translation:
    """A bijection between settings of ``source`` and settings of ``target``.

    ``forward[T]`` is an expression over source variables, ``inverse[S]``
    an expression over target variables.  ``linear`` records the layer,
    new names and matrix when the translation came from :meth:`linear`.
    """

    source: tuple[tuple[str, Domain], ...]
    target: tuple[tuple[str, Domain], ...]
    forward: Mapping[str, Expr]
    inverse: Mapping[str, Expr]
    linear_form: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))
        object.__setattr__(self, "forward", dict(self.forward))
        object.__setattr__(self, "inverse", dict(self.inverse))
        src = {n for n, _ in self.source}
        tgt = {n for n, _ in self.target}
        if set(self.forward) != tgt:
            raise ValueError("forward must define exactly the target variables")
        if set(self.inverse) != src:
            raise ValueError("inverse must define exactly the source variables")
        for t, e in self.forward.items():
            stray = set(free_vars(e)) - src
            if stray:
                raise ValueError(f"forward map of {t} reads non-source variables {', '.join(sorted(stray))}")
        for s, e in self.inverse.items():
            stray = set(free_vars(e)) - tgt
            if stray:
                raise ValueError(f"inverse map of {s} reads non-target variables {', '.join(sorted(stray))}")

    @property
    def source_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.source)

    @property
    def target_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.target)

    def inverted(self) -> "Translation":
        return Translation(self.target, self.source, self.inverse, self.forward)

    def apply(self, assignment: Mapping, mode=EXACT) -> dict:
        return {t: evaluate(self.forward[t], assignment, mode) for t in self.target_names}

    def unapply(self, assignment: Mapping, mode=EXACT) -> dict:
        return {s: evaluate(self.inverse[s], assignment, mode) for s in self.source_names}

    @classmethod
    def identity(cls, model: CausalModel) -> "Translation":
        vd = model.variables_with_domains()
        ids = {n: var(n) for n in model.variables}
        return cls(vd, vd, ids, ids)

    @classmethod
    def from_model(cls, model: CausalModel, target: Sequence[tuple[str, Domain]],
                   forward: Mapping[str, Expr], inverse: Mapping[str, Expr]) -> "Translation":
        return cls(model.variables_with_domains(), target, forward, inverse)

    @classmethod
    def linear(cls, model: CausalModel, layer: Sequence[str], names: Sequence[str],
               matrix: Sequence[Sequence], inverse: Sequence[Sequence] | None = None) -> "Translation":
        """Rotate ``layer`` into new variables ``names``: Z_j = sum_i G_i M_ij.

        Every other variable passes through unchanged.  The inverse is exact
        over the rationals unless supplied.
        """
        layer, names = list(layer), list(names)
        n = len(layer)
        m = [[as_rational(x) for x in row] for row in matrix]
        if len(m) != n or any(len(r) != n for r in m) or len(names) != n:
            raise ValueError("linear translation needs an n-by-n matrix for n layer variables")
        minv = exact_inverse(m) if inverse is None else [[as_rational(x) for x in r] for r in inverse]
        clash = set(names) & (set(model.variables) - set(layer))
        if clash:
            raise ValueError(f"new names clash with model variables: {', '.join(sorted(clash))}")
        forward: dict[str, Expr] = {}
        back: dict[str, Expr] = {}
        target = []
        pos = {g: i for i, g in enumerate(layer)}
        for v, d in model.variables_with_domains():
            if v in pos:
                j = pos[v]
                z = names[j]
                target.append((z, REAL))
                forward[z] = _lincomb([(m[i][j], layer[i]) for i in range(n)])
                back[v] = _lincomb([(minv[jj][j], names[jj]) for jj in range(n)])
            else:
                target.append((v, d))
                forward[v] = var(v)
                back[v] = var(v)
        form = (tuple(layer), tuple(names), tuple(tuple(r) for r in m))
        return cls(model.variables_with_domains(), target, forward, back, form)


def _lincomb(terms: Sequence[tuple[Fraction, str]]) -> Expr:
    parts = [var(n) if c == 1 else mul(const(c), var(n)) for c, n in terms if c != 0]
    if not parts:
        return const(0)
    return parts[0] if len(parts) == 1 else add(*parts)


def _finite_space(pairs: Sequence[tuple[str, Domain]]) -> list[dict] | None:
    if not all(d.is_finite for _, d in pairs):
        return None
    size = 1
    for _, d in pairs:
        size *= len(d.values)
    if size > EXHAUSTIVE_LIMIT:
        return None
    names = [n for n, _ in pairs]
    return [dict(zip(names, c)) for c in itertools.product(*(d.values for _, d in pairs))]


def validate_translation(t: Translation, model: CausalModel | None = None,
                         inputs: Sequence[Mapping] | None = None, mode=EXACT) -> list[str]:
    """Check that ``t`` is a bijection on the checked space.

    The space is every source setting when all domains are finite and
    small, otherwise the realized settings of ``model`` on ``inputs``.
    Raises :class:`NonBijective` with a colliding pair; returns notes.
    """
    notes = []
    if model is not None and set(t.source_names) != set(model.variables):
        raise ValueError("translation source variables differ from the model's variables")
    space = _finite_space(t.source)
    if space is None:
        if model is None:
            raise ValueError("infinite source space needs a model to realize settings")
        space = [run(model, x, mode) for x in (inputs or [None])]
        notes.append(f"checked on {len(space)} realized settings")
    else:
        notes.append(f"checked exhaustively on {len(space)} settings")
    tdom = dict(t.target)
    images: list[tuple[dict, dict]] = []
    exhaustive = notes[0].startswith("checked exhaustively")
    for s in space:
        img = t.apply(s, mode)
        for n, v in img.items():
            if v not in tdom[n]:
                raise NonBijective(f"{n}={v} is outside its target domain", (s,))
        back = t.unapply(img, mode)
        if not all(mode.same(back[k], s[k]) for k in s):
            raise NonBijective("inverse does not recover the source setting", (s, back))
        if exhaustive:
            images.append((s, img))
    if exhaustive:
        seen: dict[tuple, dict] = {}
        for s, img in images:
            key = tuple(img[n] for n in t.target_names)
            if key in seen:
                raise NonBijective("two source settings share an image", (seen[key], s))
            seen[key] = s
        tspace = _finite_space(t.target)
        if tspace is not None and len(tspace) != len(seen):
            raise NonBijective("forward map is not onto the target space")
    return notes


def _target_mechanism(t: Translation, model: CausalModel) -> dict[str, Expr]:
    # each source mechanism, re-expressed over target variables
    src_in_tgt = {s: substitute(model.mechanism(s), t.inverse) for s in t.source_names}
    return {z: substitute(t.forward[z], src_in_tgt) for z in t.target_names}


def translate_model(model: CausalModel, t: Translation, inputs: Sequence[Mapping] | None = None,
                    mode=EXACT, check: bool = True, name: str | None = None) -> CausalModel:
    """The model whose solutions are the images of ``model``'s solutions.

    Each target variable's mechanism is its forward map applied to the
    source mechanisms rewritten over target variables.  Mechanisms over
    finite domains are rebuilt from their value table so they read only
    the variables they depend on.
    """
    if check:
        validate_translation(t, model, inputs, mode)
    tdom = dict(t.target)
    order = t.target_names
    mech = {}
    for z, e in _target_mechanism(t, model).items():
        e = simplify(e)
        fv = free_vars(e)
        if tdom[z].is_finite and all(tdom[v].is_finite for v in fv):
            e = compile_table(e, {v: tdom[v].values for v in fv}, order)
        mech[z] = e
    ins = [z for z in order if t.forward[z].op == "var" and t.forward[z].value in model.inputs]
    out = CausalModel(list(t.target), mech, inputs=ins, name=name or (f"tau({model.name})" if model.name else ""))
    out.order  # raises CycleError
    return out


def _ext_equal(a: Expr, b: Expr, domains: Mapping[str, Domain]) -> bool:
    if a == b:
        return True
    names = sorted(set(free_vars(a)) | set(free_vars(b)))
    if not all(domains[n].is_finite for n in names):
        return simplify(a) == simplify(b)
    for combo in itertools.product(*(domains[n].values for n in names)):
        env = dict(zip(names, combo))
        if as_rational(evaluate(a, env)) != as_rational(evaluate(b, env)):
            return False
    return True


def pull_back(t: Translation, hard: Interventional, context: CausalModel, mode=EXACT) -> Interventional:
    """The low-level interventional induced by a hard intervention on the image.

    Translate ``context``, apply ``hard``, translate back, and keep each
    mechanism that differs (extensionally) from ``context``.
    """
    if not hard.is_hard:
        raise ValueError(f"pull-back is defined for hard interventions only, got {hard}")
    image = translate_model(context, t, check=False)
    unknown = set(hard.targets) - set(image.variables)
    if unknown:
        raise KeyError(f"unknown target variables {', '.join(sorted(unknown))}")
    back = translate_model(apply(hard, image), t.inverted(), check=False)
    doms = context.domains
    reps = {}
    for s in context.variables:
        new = back.mechanism(s)
        if not _ext_equal(new, context.mechanism(s), doms):
            reps[s] = new
    label = f"pullback({hard.label})" if hard.label else "pullback"
    return Interventional.replace(reps, label=label) if reps else Interventional((), label)


def intervention_family(t: Translation, context: CausalModel, targets: Sequence[str] | None = None
                        ) -> list[Interventional]:
    """Pull-backs of single hard interventions and of disjoint pairs.

    Pairs are pulled back one after the other, each in the context the
    previous one produced.  The list is ordered and free of duplicates.
    """
    image = translate_model(context, t, check=False)
    if targets is None:
        targets = [z for z in image.variables if z not in image.inputs]
    targets = list(targets)
    for z in targets:
        if not image.domain(z).is_finite:
            raise ValueError(f"target {z} has an infinite domain")
    out: list[Interventional] = []
    for z in targets:
        for v in image.domain(z).values:
            out.append(pull_back(t, Interventional.hard({z: v}), context))
    for a, b in itertools.combinations(targets, 2):
        for va in image.domain(a).values:
            for vb in image.domain(b).values:
                out.append(_pull_pair(t, context, (a, va), (b, vb)))
    seen = set()
    unique = []
    for iv in out:
        if iv not in seen:
            seen.add(iv)
            unique.append(iv)
    return unique


def _pull_pair(t: Translation, context: CausalModel, first: tuple, second: tuple) -> Interventional:
    i1 = pull_back(t, Interventional.hard({first[0]: first[1]}), context)
    i2 = pull_back(t, Interventional.hard({second[0]: second[1]}), apply(i1, context))
    both = Interventional.compose(i1, i2)
    # drop replacements that ended up equal to the original mechanisms
    keep = {s: e for s, e in both.replacements if not _ext_equal(e, context.mechanism(s), context.domains)}
    label = f"pullback({first[0]}<-{first[1]}, {second[0]}<-{second[1]})"
    return Interventional.replace(keep, label=label) if keep else Interventional((), label)


def check_family_commutation(t: Translation, context: CausalModel, inputs: Sequence[Mapping],
                             targets: Sequence[str] | None = None, mode=EXACT):
    """Pulled-back disjoint pairs give the same model in either order."""
    from .abstraction import VerificationReport, Witness
    image = translate_model(context, t, check=False)
    if targets is None:
        targets = [z for z in image.variables if z not in image.inputs]
    witnesses = []
    checked = 0
    for a, b in itertools.combinations(targets, 2):
        for va in image.domain(a).values:
            for vb in image.domain(b).values:
                ab = apply(_pull_pair(t, context, (a, va), (b, vb)), context)
                ba = apply(_pull_pair(t, context, (b, vb), (a, va)), context)
                for x in inputs:
                    checked += 1
                    try:
                        ra, rb = run(ab, x, mode), run(ba, x, mode)
                    except MarginViolation as exc:
                        witnesses.append(Witness("margin", base=x, note=str(exc)))
                        continue
                    if any(not mode.same(ra[k], rb[k]) for k in ra):
                        witnesses.append(Witness("commutation", base=x, low_result=ra, high_result=rb,
                                                 targets=(a, b), note=f"{a}<-{va}, {b}<-{vb}"))
    return VerificationReport("pull-back commutation", "fail" if witnesses else "pass", checked, witnesses)


def check_translation(model: CausalModel, t: Translation, inputs: Sequence[Mapping],
                      against: CausalModel | None = None, targets: Sequence[str] | None = None,
                      mode=EXACT, name: str = "translation"):
    """Check pull-backs of single hard interventions and ordered disjoint pairs.

    For each high-level hard intervention h (on ``targets``, default the
    non-input target variables) and each input, forward(Run(model_pb(h)))
    must equal Run(translated_h).  With ``against``, the translated model
    must also agree with ``against`` under every such h.
    """
    from .abstraction import VerificationReport, Witness
    validate_translation(t, model, inputs, mode)
    image = translate_model(model, t, check=False)
    if targets is None:
        targets = [z for z in image.variables if z not in image.inputs]
    hards: list[list[tuple[str, object]]] = []
    for z in targets:
        hards.extend([[(z, v)] for v in image.domain(z).values])
    for a, b in itertools.permutations(targets, 2):
        hards.extend([[(a, va), (b, vb)] for va in image.domain(a).values for vb in image.domain(b).values])
    witnesses = []
    checked = 0
    for steps in hards:
        ctx = model
        parts = []
        for z, v in steps:
            pb = pull_back(t, Interventional.hard({z: v}), ctx)
            parts.append(pb)
            ctx = apply(pb, ctx)
        hard = Interventional.hard(dict(steps))
        img_i = apply(hard, image)
        ref_i = apply(hard, against) if against is not None else None
        label = ", ".join(f"{z}<-{v}" for z, v in steps)
        for x in inputs:
            checked += 1
            lr = run(ctx, x, mode)
            fwd = t.apply(lr, mode)
            tr = run(img_i, x, mode)
            bad = tuple(z for z in fwd if not mode.same(fwd[z], tr[z]))
            if bad:
                witnesses.append(Witness("pullback", base=x, low_intervention=Interventional.compose(*parts).mapping,
                                         low_result=lr, translated=fwd, high_intervention=dict(steps),
                                         high_result=tr, mismatched=bad, note=label))
            if ref_i is not None:
                rr = run(ref_i, x, mode)
                bad = tuple(z for z in tr if z in rr and not mode.same(tr[z], rr[z]))
                if bad:
                    witnesses.append(Witness("reference", base=x, high_intervention=dict(steps), translated=tr,
                                             high_result=rr, mismatched=bad, note=label))
    details = {"hard_interventions": len(hards), "inputs": len(inputs),
               "family_size": len(intervention_family(t, model, targets))}
    return VerificationReport(name, "fail" if witnesses else "pass", checked, witnesses, details)

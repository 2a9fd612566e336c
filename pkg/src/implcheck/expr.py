"""Mechanism expressions.

A small closed language for structural mechanisms: rational constants,
variable references, arithmetic, ReLU, boolean gates and indicators.
Expressions are immutable and hashable, so they double as dictionary keys
when models are compared, deduplicated or rewritten.

The textual form is a parenthesized prefix syntax::

    (xnor (var A1) (var A2))
    (relu (add (mul (const 1) (var X1)) (mul (const -1) (var X2))))
"""
from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

__all__ = [
    "Expr", "ParseError", "UnboundVariable", "MarginViolation",
    "Exact", "Approx", "EXACT",
    "const", "var", "add", "mul", "neg", "relu", "xnor", "xor", "and_", "or_",
    "not_", "eq", "leq",
    "evaluate", "parse", "to_sexpr", "substitute", "simplify", "free_vars",
    "compile_table", "as_rational",
]

ARITY = {"neg": 1, "relu": 1, "not": 1, "xnor": 2, "eq": 2, "leq": 2}
VARIADIC = {"add", "mul", "and", "or"}
BOOLEAN_OPS = frozenset({"xnor", "and", "or", "not", "eq", "leq"})
OPS = frozenset({"const", "var"}) | set(ARITY) | VARIADIC


def as_rational(value) -> Fraction:
    """Coerce ints, Fractions, floats (exactly) and numeric strings."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        return Fraction(int(value))
    if isinstance(value, (int, float)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    try:  # numpy scalars
        return Fraction(float(value)) if hasattr(value, "dtype") and value.dtype.kind == "f" else Fraction(int(value))
    except (TypeError, ValueError):
        raise TypeError(f"not a rational: {value!r}") from None


def _numval(q: Fraction):
    return q.numerator if q.denominator == 1 else q


class Expr:
    """One node of a mechanism expression.

    ``op`` is one of :data:`OPS`; ``args`` holds child expressions;
    ``value`` is the Fraction of a ``const`` node or the name of a ``var``.
    """

    __slots__ = ("op", "args", "value", "_hash", "_num", "_float", "_free")

    def __init__(self, op: str, args: Sequence["Expr"] = (), value=None):
        if op not in OPS:
            raise ValueError(f"unknown expression op {op!r}")
        args = tuple(args)
        if op == "const":
            value = as_rational(value)
            if args:
                raise ValueError("const takes no arguments")
        elif op == "var":
            if not isinstance(value, str) or not value:
                raise ValueError("var needs a name")
            if args:
                raise ValueError("var takes no arguments")
        else:
            need = ARITY.get(op)
            if need is not None and len(args) != need:
                raise ValueError(f"{op} takes {need} argument(s), got {len(args)}")
            if need is None and not args:
                raise ValueError(f"{op} needs at least one argument")
            for a in args:
                if not isinstance(a, Expr):
                    raise TypeError(f"argument of {op} is not an Expr: {a!r}")
        self.op = op
        self.args = args
        self.value = value
        self._hash = hash((op, args, value))
        self._num = _numval(value) if op == "const" else None
        self._float = float(value) if op == "const" else None
        self._free = None

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return self.op == other.op and self.value == other.value and self.args == other.args

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Expr<{to_sexpr(self)}>"

    def __str__(self):
        return to_sexpr(self)

    @property
    def is_boolean(self) -> bool:
        """True if the node can only produce 0 or 1."""
        if self.op == "const":
            return self.value in (0, 1)
        return self.op in BOOLEAN_OPS


# -- constructors -----------------------------------------------------------

def const(value) -> Expr:
    return Expr("const", value=value)


def var(name: str) -> Expr:
    return Expr("var", value=name)


def _wrap(x) -> Expr:
    return x if isinstance(x, Expr) else const(x)


def add(*xs) -> Expr:
    return Expr("add", [_wrap(x) for x in xs])


def mul(*xs) -> Expr:
    return Expr("mul", [_wrap(x) for x in xs])


def neg(x) -> Expr:
    return Expr("neg", [_wrap(x)])


def relu(x) -> Expr:
    return Expr("relu", [_wrap(x)])


def xnor(a, b) -> Expr:
    return Expr("xnor", [_wrap(a), _wrap(b)])


def xor(a, b) -> Expr:
    return not_(xnor(a, b))


def and_(*xs) -> Expr:
    return Expr("and", [_wrap(x) for x in xs])


def or_(*xs) -> Expr:
    return Expr("or", [_wrap(x) for x in xs])


def not_(x) -> Expr:
    return Expr("not", [_wrap(x)])


def eq(a, b) -> Expr:
    return Expr("eq", [_wrap(a), _wrap(b)])


def leq(a, b) -> Expr:
    return Expr("leq", [_wrap(a), _wrap(b)])


# -- arithmetic modes -------------------------------------------------------

class MarginViolation(ArithmeticError):
    """An indicator input fell in the ambiguous band of an approximate check."""


class Exact:
    """Exact rational arithmetic; indicators compare with ``==`` / ``<=``."""

    exact = True
    tol = 0

    def const(self, node: Expr):
        return node._num

    def eq(self, a, b) -> int:
        return int(a == b)

    def leq(self, a, b) -> int:
        return int(a <= b)

    def same(self, a, b) -> bool:
        return a == b

    def coerce(self, v):
        return _numval(as_rational(v))

    def __repr__(self):
        return "Exact()"


class Approx:
    """Float arithmetic with a tolerance band around indicator thresholds.

    Differences within ``tol`` count as equal.  Differences between ``tol``
    and ``margin`` are ambiguous and raise :class:`MarginViolation`, so an
    approximate certificate never rests on a near-tie.
    """

    exact = False

    def __init__(self, tol: float = 1e-7, margin: float = 1e-4):
        if not 0 <= tol < margin:
            raise ValueError("need 0 <= tol < margin")
        self.tol = tol
        self.margin = margin

    def const(self, node: Expr):
        return node._float

    def _side(self, d: float, what: str) -> int:
        ad = abs(d)
        if ad <= self.tol:
            return 0
        if ad < self.margin:
            raise MarginViolation(f"{what} input within {self.margin:g} of its threshold (distance {ad:.3g})")
        return 1 if d > 0 else -1

    def eq(self, a, b) -> int:
        return int(self._side(a - b, "eq") == 0)

    def leq(self, a, b) -> int:
        return int(self._side(a - b, "leq") <= 0)

    def same(self, a, b) -> bool:
        return abs(a - b) <= self.tol

    def coerce(self, v):
        return float(v)

    def __repr__(self):
        return f"Approx(tol={self.tol:g}, margin={self.margin:g})"


EXACT = Exact()


# -- evaluation -------------------------------------------------------------

class UnboundVariable(KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unbound variable {self.name!r}"


def evaluate(expr: Expr, env: Mapping[str, object], mode=EXACT):
    """Evaluate ``expr`` with variables bound by ``env``.

    Boolean nodes return the ints 0/1.  In exact mode values stay ints or
    Fractions; in :class:`Approx` mode they are floats.
    """
    op = expr.op
    if op == "const":
        return mode.const(expr)
    if op == "var":
        try:
            return env[expr.value]
        except KeyError:
            raise UnboundVariable(expr.value) from None
    args = expr.args
    if op == "add":
        total = evaluate(args[0], env, mode)
        for a in args[1:]:
            total = total + evaluate(a, env, mode)
        return total
    if op == "mul":
        prod = evaluate(args[0], env, mode)
        for a in args[1:]:
            if prod == 0 and mode.exact:
                # still evaluate for unbound-variable errors
                evaluate(a, env, mode)
                continue
            prod = prod * evaluate(a, env, mode)
        return prod
    if op == "neg":
        return -evaluate(args[0], env, mode)
    if op == "relu":
        v = evaluate(args[0], env, mode)
        return v if v > 0 else v - v
    if op == "not":
        return int(evaluate(args[0], env, mode) == 0)
    if op == "xnor":
        a = evaluate(args[0], env, mode) != 0
        b = evaluate(args[1], env, mode) != 0
        return int(a == b)
    if op == "and":
        vals = [evaluate(a, env, mode) != 0 for a in args]
        return int(all(vals))
    if op == "or":
        vals = [evaluate(a, env, mode) != 0 for a in args]
        return int(any(vals))
    if op == "eq":
        return mode.eq(evaluate(args[0], env, mode), evaluate(args[1], env, mode))
    if op == "leq":
        return mode.leq(evaluate(args[0], env, mode), evaluate(args[1], env, mode))
    raise AssertionError(op)


def free_vars(expr: Expr) -> tuple[str, ...]:
    """Variable names in order of first (depth-first) occurrence."""
    if expr._free is None:
        seen: dict[str, None] = {}
        stack = [expr]
        while stack:
            node = stack.pop()
            if node.op == "var":
                seen.setdefault(node.value)
            elif node._free is not None:
                for n in node._free:
                    seen.setdefault(n)
            else:
                stack.extend(reversed(node.args))
        expr._free = tuple(seen)
    return expr._free


def substitute(expr: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace ``var`` leaves named in ``mapping`` (simultaneously)."""
    if not mapping:
        return expr
    memo: dict[Expr, Expr] = {}

    def go(node: Expr) -> Expr:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if node.op == "var":
            out = mapping.get(node.value, node)
        elif node.op == "const":
            out = node
        else:
            new_args = tuple(go(a) for a in node.args)
            out = node if new_args == node.args else Expr(node.op, new_args)
        memo[node] = out
        return out

    return go(expr)


# -- simplification ---------------------------------------------------------

def _linear_terms(node: Expr) -> tuple[Fraction, Expr | None]:
    """Split ``node`` into (coefficient, atom); atom None means a constant."""
    if node.op == "const":
        return node.value, None
    if node.op == "mul":
        consts = [a for a in node.args if a.op == "const"]
        rest = [a for a in node.args if a.op != "const"]
        if len(rest) == 1 and consts:
            c = Fraction(1)
            for k in consts:
                c *= k.value
            return c, rest[0]
    if node.op == "neg":
        c, atom = _linear_terms(node.args[0])
        return -c, atom
    return Fraction(1), node


def _scaled(c: Fraction, atom: Expr) -> Expr:
    return atom if c == 1 else Expr("mul", (const(c), atom))


def simplify(expr: Expr) -> Expr:
    """Constant folding plus collection of like terms in sums.

    Preserves exact semantics; does not attempt boolean minimization
    (see :func:`compile_table` for that on finite domains).
    """
    memo: dict[Expr, Expr] = {}

    def go(node: Expr) -> Expr:
        hit = memo.get(node)
        if hit is not None:
            return hit
        out = _simplify_node(node, go)
        memo[node] = out
        return out

    return go(expr)


def _simplify_node(node: Expr, go: Callable[[Expr], Expr]) -> Expr:
    op = node.op
    if op in ("const", "var"):
        return node
    args = [go(a) for a in node.args]
    if all(a.op == "const" for a in args):
        return const(as_rational(evaluate(Expr(op, args), {})))
    if op == "add":
        flat: list[Expr] = []
        for a in args:
            flat.extend(a.args if a.op == "add" else (a,))
        coefs: dict[Expr, Fraction] = {}
        offset = Fraction(0)
        for a in flat:
            c, atom = _linear_terms(a)
            if atom is None:
                offset += c
            else:
                coefs[atom] = coefs.get(atom, Fraction(0)) + c
        terms = [_scaled(c, atom) for atom, c in coefs.items() if c != 0]
        if offset != 0 or not terms:
            terms.append(const(offset))
        return terms[0] if len(terms) == 1 else Expr("add", terms)
    if op == "mul":
        flat = []
        for a in args:
            flat.extend(a.args if a.op == "mul" else (a,))
        c = Fraction(1)
        rest = []
        for a in flat:
            if a.op == "const":
                c *= a.value
            else:
                rest.append(a)
        if c == 0:
            return const(0)
        if not rest:
            return const(c)
        if len(rest) == 1:
            return _scaled(c, rest[0])
        body = Expr("mul", rest)
        return body if c == 1 else Expr("mul", (const(c), *rest))
    if op == "neg":
        (a,) = args
        if a.op == "neg":
            return a.args[0]
        c, atom = _linear_terms(a)
        return _scaled(-c, atom)
    if op == "xnor":
        a, b = args
        for k, other in ((a, b), (b, a)):
            if k.op == "const" and other.is_boolean:
                return other if k.value != 0 else _not(other)
    if op == "not":
        (a,) = args
        if a.op == "not" and a.args[0].is_boolean:
            return a.args[0]
    if op in ("and", "or"):
        absorbing = 0 if op == "and" else 1
        kept = []
        for a in args:
            if a.op == "const":
                if (a.value != 0) == bool(absorbing):
                    return const(absorbing)
                continue
            kept.append(a)
        if len(kept) == 1 and kept[0].is_boolean:
            return kept[0]
        if not kept:
            return const(1 - absorbing)
        return Expr(op, kept)
    return Expr(op, args)


def _not(x: Expr) -> Expr:
    if x.op == "not" and x.args[0].is_boolean:
        return x.args[0]
    return Expr("not", (x,))


# -- finite-domain compilation ---------------------------------------------

def compile_table(expr: Expr, domains: Mapping[str, Sequence], order: Sequence[str] | None = None) -> Expr:
    """Rebuild ``expr`` from its value table over finite variable domains.

    ``domains`` maps each free variable to its (finite) value list.  The
    result depends only on the variables the function actually reads, and
    common boolean gates are recognised, so it reads like a hand-written
    mechanism.  ``order`` fixes the argument order of the result.
    """
    names = list(free_vars(expr))
    if order is not None:
        rank = {n: i for i, n in enumerate(order)}
        names.sort(key=lambda n: rank.get(n, len(rank)))
    doms = [tuple(domains[n]) for n in names]
    table = {}
    for combo in itertools.product(*doms):
        table[combo] = as_rational(evaluate(expr, dict(zip(names, combo))))
    relevant = []
    for i, n in enumerate(names):
        for combo, val in table.items():
            if any(table[combo[:i] + (alt,) + combo[i + 1:]] != val for alt in doms[i]):
                relevant.append(i)
                break
    keep_names = [names[i] for i in relevant]
    keep_doms = [doms[i] for i in relevant]
    base = {i: doms[i][0] for i in range(len(names)) if i not in relevant}
    reduced = {}
    for combo in itertools.product(*keep_doms):
        full = []
        it = iter(combo)
        for i in range(len(names)):
            full.append(next(it) if i in relevant else base[i])
        reduced[combo] = table[tuple(full)]
    return _from_table(keep_names, keep_doms, reduced)


_GATES2 = {
    (1, 0, 0, 1): lambda a, b: xnor(a, b),
    (0, 1, 1, 0): lambda a, b: xor(a, b),
    (0, 0, 0, 1): lambda a, b: and_(a, b),
    (0, 1, 1, 1): lambda a, b: or_(a, b),
}


def _from_table(names, doms, table) -> Expr:
    if not names:
        return const(table[()])
    values = [table[c] for c in itertools.product(*doms)]
    boolean_in = all(tuple(d) == (0, 1) for d in doms)
    if len(names) == 1:
        v = var(names[0])
        if all(table[(x,)] == x for x in doms[0]):
            return v
        if boolean_in and values == [1, 0]:
            return not_(v)
    if len(names) == 2 and boolean_in:
        gate = _GATES2.get(tuple(values))
        if gate is not None:
            return gate(var(names[0]), var(names[1]))
    terms = []
    for combo, val in table.items():
        if val == 0:
            continue
        guards = [eq(var(n), const(x)) for n, x in zip(names, combo)]
        guard = guards[0] if len(guards) == 1 else and_(*guards)
        terms.append(guard if val == 1 else mul(const(val), guard))
    if not terms:
        return const(0)
    return terms[0] if len(terms) == 1 else add(*terms)


# -- text form --------------------------------------------------------------

class ParseError(ValueError):
    """Malformed expression text; ``pos`` is a 0-based character offset."""

    def __init__(self, message: str, pos: int, text: str = ""):
        super().__init__(message)
        self.message = message
        self.pos = pos
        self.text = text

    @property
    def line(self) -> int:
        return self.text.count("\n", 0, self.pos) + 1

    @property
    def column(self) -> int:
        return self.pos - (self.text.rfind("\n", 0, self.pos) + 1) + 1

    def __str__(self):
        return f"line {self.line}, column {self.column}: {self.message}"


def to_sexpr(expr: Expr) -> str:
    if expr.op == "const":
        return f"(const {expr.value})"
    if expr.op == "var":
        return f"(var {expr.value})"
    return "(" + " ".join([expr.op, *(to_sexpr(a) for a in expr.args)]) + ")"


def _tokens(text: str) -> Iterable[tuple[str, int]]:
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            yield ch, i
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            yield text[i:j], i
            i = j
    yield "", n


def parse(text: str) -> Expr:
    """Parse the prefix syntax produced by :func:`to_sexpr`."""
    toks = list(_tokens(text))
    pos = 0

    def fail(msg, at):
        raise ParseError(msg, at, text)

    def node() -> Expr:
        nonlocal pos
        tok, at = toks[pos]
        if tok != "(":
            fail(f"expected '(' but found {tok or 'end of input'!r}", at)
        pos += 1
        op, op_at = toks[pos]
        if op in ("", "(", ")"):
            fail("expected an operator", op_at)
        pos += 1
        if op in ("const", "var"):
            atom, atom_at = toks[pos]
            if atom in ("", "(", ")"):
                fail(f"{op} needs an atom", atom_at)
            pos += 1
            if op == "const":
                try:
                    value = Fraction(atom)
                except (ValueError, ZeroDivisionError):
                    fail(f"bad rational {atom!r}", atom_at)
                out = const(value)
            else:
                out = var(atom)
        else:
            if op not in OPS:
                fail(f"unknown operator {op!r}", op_at)
            args = []
            while toks[pos][0] == "(":
                args.append(node())
            try:
                out = Expr(op, args)
            except ValueError as exc:
                fail(str(exc), op_at)
        tok, at = toks[pos]
        if tok != ")":
            fail(f"expected ')' but found {tok or 'end of input'!r}", at)
        pos += 1
        return out

    result = node()
    tok, at = toks[pos]
    if tok != "":
        fail(f"trailing input {tok!r}", at)
    return result

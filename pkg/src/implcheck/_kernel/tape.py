"""Compile mechanisms to a flat instruction list and run it over batches.

The compiled Cython interpreter is used when it was built; setting
``IMPLCHECK_PURE=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..expr import Expr
from ..model import CausalModel
from . import _tape_py

if os.environ.get("IMPLCHECK_PURE"):
    _impl = _tape_py
    BACKEND = "python"
else:
    try:
        from . import _tape as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _tape_py
        BACKEND = "python"

_OPS = {"add": _tape_py.ADD, "mul": _tape_py.MUL, "and": _tape_py.AND, "or": _tape_py.OR}
_UNARY = {"neg": _tape_py.NEG, "relu": _tape_py.RELU, "not": _tape_py.NOT}
_BINARY = {"xnor": _tape_py.XNOR, "eq": _tape_py.EQ, "leq": _tape_py.LEQ}


@dataclass
class Tape:
    """Straight-line code over numbered slots.

    ``slots`` maps variable names to rows of the value array; ``free`` are
    the variables the caller must fill before :func:`execute`.
    """

    code: np.ndarray
    consts: np.ndarray
    slots: dict[str, int]
    free: tuple[str, ...]
    size: int

    def allocate(self, batch: int) -> np.ndarray:
        return np.zeros((self.size, batch))


def compile_tape(model: CausalModel, compute: Sequence[str], extra: Mapping[str, Expr] | None = None) -> Tape:
    """Tape computing ``compute`` (in model order) then ``extra`` expressions.

    Variables read but not computed become free slots.
    """
    compute = [v for v in model.order if v in set(compute)]
    slots: dict[str, int] = {}
    consts: list[float] = []
    code: list[tuple[int, int, int, int]] = []
    free: list[str] = []
    counter = [0]

    def new_slot() -> int:
        counter[0] += 1
        return counter[0] - 1

    targets = dict.fromkeys(compute)
    for v in compute:
        slots[v] = new_slot()
    for k in (extra or {}):
        slots[k] = new_slot()
    memo: dict[Expr, int] = {}

    def emit(e: Expr) -> int:
        hit = memo.get(e)
        if hit is not None:
            return hit
        if e.op == "var":
            name = e.value
            if name not in slots:
                slots[name] = new_slot()
                free.append(name)
            return slots[name]
        if e.op == "const":
            consts.append(float(e.value))
            out = new_slot()
            code.append((_tape_py.CONST, len(consts) - 1, 0, out))
        elif e.op in _OPS:
            acc = emit(e.args[0])
            out = acc
            for arg in e.args[1:]:
                b = emit(arg)
                out = new_slot()
                code.append((_OPS[e.op], acc, b, out))
                acc = out
            if len(e.args) == 1 and e.op in ("and", "or"):
                out = new_slot()
                code.append((_tape_py.OR, acc, acc, out))
        elif e.op in _UNARY:
            a = emit(e.args[0])
            out = new_slot()
            code.append((_UNARY[e.op], a, 0, out))
        elif e.op in _BINARY:
            a, b = emit(e.args[0]), emit(e.args[1])
            out = new_slot()
            code.append((_BINARY[e.op], a, b, out))
        else:
            raise ValueError(f"cannot compile op {e.op}")
        memo[e] = out
        return out

    for v in list(targets) + list(extra or {}):
        e = extra[v] if v not in targets else model.mechanism(v)
        code.append((_tape_py.COPY, emit(e), 0, slots[v]))
    arr = np.array(code, dtype=np.int64).reshape(-1, 4)
    return Tape(arr, np.array(consts, dtype=float), slots, tuple(free), counter[0])


def execute(tape: Tape, values: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Run ``tape`` in place on ``values[slot, batch]`` and return it."""
    if values.dtype != np.float64 or not values.flags.c_contiguous:
        raise ValueError("values must be a C-contiguous float64 array")
    _impl.run_tape(tape.code, tape.consts, values, float(tol))
    return values

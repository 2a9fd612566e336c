"""Named example objects: the XNOR circuit, the ReLU network, and friends.

Variable names: circuit inputs ``A1..A4``, intermediates ``B1, B2``, output
``C``; the recarved circuit uses ``D1, D2`` in place of ``B1, B2``; network
inputs ``X1..X4``, hidden units ``H1_1..H1_4`` and ``H2_1..H2_4``, output
``Y``.

``network-N`` uses third-layer weights (1, 1, -99/100, -99/100).  With the
positive weights (1, 1, 99/100, 99/100) the output indicator disagrees
with the circuit on the four inputs where exactly one pair is equal, so
that variant is kept separately as ``network-N-printed`` to show the
failure.

Pulling back ``B1 <- 1`` through the recarving gives ``D1 <- 1`` and
``D2 <- xnor(A3, A4)``; ``B1 <- 0`` gives ``D1 <- 0`` and
``D2 <- xor(A3, A4)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .abstraction import Alignment
from .expr import const, eq, leq, var, xnor
from .model import BOOL, CausalModel, mlp_model
from .translate import Translation

__all__ = [
    "CATALOG", "build", "names", "circuit_m", "circuit_m_star", "network_n", "network_n_printed",
    "alignment_n_to_m", "alignment_n_to_m_scrambled", "translation_m_star_to_m", "rotated_n",
    "planted_rotation", "EqualityTaskInstance", "gen_equality_task", "A", "X", "H1", "H2",
    "W1", "W2", "W3", "W3_PRINTED",
]

A = ["A1", "A2", "A3", "A4"]
X = ["X1", "X2", "X3", "X4"]
H1 = ["H1_1", "H1_2", "H1_3", "H1_4"]
H2 = ["H2_1", "H2_2", "H2_3", "H2_4"]

W1 = [[1, -1, 0, 0],
      [-1, 1, 0, 0],
      [0, 0, 1, -1],
      [0, 0, -1, 1]]
W2 = [[1, -1, 1, 0],
      [1, -1, 1, 0],
      [-1, 1, 0, 1],
      [-1, 1, 0, 1]]
W3 = [[1], [1], [Fraction(-99, 100)], [Fraction(-99, 100)]]
W3_PRINTED = [[1], [1], [Fraction(99, 100)], [Fraction(99, 100)]]


def circuit_m() -> CausalModel:
    mech = {a: const(0) for a in A}
    mech["B1"] = xnor(var("A1"), var("A2"))
    mech["B2"] = xnor(var("A3"), var("A4"))
    mech["C"] = xnor(var("B1"), var("B2"))
    return CausalModel([(v, BOOL) for v in A + ["B1", "B2", "C"]], mech, inputs=A, name="circuit-M")


def circuit_m_star() -> CausalModel:
    mech = {a: const(0) for a in A}
    mech["D1"] = xnor(var("A1"), var("A2"))
    mech["D2"] = xnor(xnor(var("A1"), var("A2")), xnor(var("A3"), var("A4")))
    mech["C"] = var("D2")
    return CausalModel([(v, BOOL) for v in A + ["D1", "D2", "C"]], mech, inputs=A, name="circuit-M-star")


def network_n() -> CausalModel:
    return mlp_model([W1, W2, W3], [X, H1, H2, ["Y"]], name="network-N")


def network_n_printed() -> CausalModel:
    return mlp_model([W1, W2, W3_PRINTED], [X, H1, H2, ["Y"]], name="network-N-printed")


def _pair_eq(a: str, b: str):
    return eq(var(a), var(b))


def alignment_n_to_m(layer: list[str] | None = None) -> Alignment:
    """Inputs to inputs, hidden pairs to B1/B2 via equality, Y to C via Y <= 0."""
    h = H1 if layer is None else layer
    cells = {a: (x,) for a, x in zip(A, X)}
    maps = {a: var(x) for a, x in zip(A, X)}
    cells["B1"], maps["B1"] = (h[0], h[1]), _pair_eq(h[0], h[1])
    cells["B2"], maps["B2"] = (h[2], h[3]), _pair_eq(h[2], h[3])
    cells["C"], maps["C"] = ("Y",), leq(var("Y"), const(0))
    return Alignment(cells, maps)


def alignment_n_to_m_scrambled() -> Alignment:
    cells = {a: (x,) for a, x in zip(A, X)}
    maps = {a: var(x) for a, x in zip(A, X)}
    cells["B1"], maps["B1"] = ("H1_1", "H1_3"), _pair_eq("H1_1", "H1_3")
    cells["B2"], maps["B2"] = ("H1_2", "H1_4"), _pair_eq("H1_2", "H1_4")
    cells["C"], maps["C"] = ("Y",), leq(var("Y"), const(0))
    return Alignment(cells, maps)


def translation_m_star_to_m() -> Translation:
    m_star = circuit_m_star()
    forward = {a: var(a) for a in A}
    forward.update(B1=var("D1"), B2=xnor(var("D1"), var("D2")), C=var("C"))
    inverse = {a: var(a) for a in A}
    inverse.update(D1=var("B1"), D2=xnor(var("B1"), var("B2")), C=var("C"))
    target = [(v, BOOL) for v in A + ["B1", "B2", "C"]]
    return Translation.from_model(m_star, target, forward, inverse)


def givens(n: int, i: int, j: int, theta: float) -> np.ndarray:
    g = np.eye(n)
    c, s = math.cos(theta), math.sin(theta)
    g[i, i] = g[j, j] = c
    g[i, j], g[j, i] = -s, s
    return g


def planted_rotation(seed: int, n: int = 4) -> np.ndarray:
    """Random special-orthogonal matrix from uniform plane angles."""
    from .search import RotationParam
    rng = np.random.default_rng(seed)
    angles = rng.uniform(-math.pi, math.pi, n * (n - 1) // 2)
    return RotationParam(n, tuple(float(a) for a in angles)).matrix


def rotated_n(seed: int) -> CausalModel:
    """Network-N with its first hidden layer rotated by a planted rotation.

    The hidden coordinates of the result are ``h R0^T`` for the planted
    ``R0``, so rotating them by ``R0`` recovers the original units.
    """
    from .search import rotate_layer
    r0 = planted_rotation(seed)
    m = rotate_layer(network_n(), H1, r0.T)
    return CausalModel(m.variables_with_domains(), m.mechanisms, inputs=m.inputs, name=f"rotated-N({seed})")


CATALOG: dict[str, Callable[[], object]] = {
    "circuit-M": circuit_m,
    "network-N": network_n,
    "network-N-printed": network_n_printed,
    "circuit-M-star": circuit_m_star,
    "alignment-N-to-M": alignment_n_to_m,
    "alignment-N-to-M-scrambled": alignment_n_to_m_scrambled,
    "translation-M-star-to-M": translation_m_star_to_m,
}


def names() -> list[str]:
    return list(CATALOG) + ["rotated-N(<seed>)"]


def build(name: str):
    """Build a catalog object by name; ``rotated-N(7)`` takes a seed."""
    if name in CATALOG:
        return CATALOG[name]()
    if name.startswith("rotated-N(") and name.endswith(")"):
        try:
            seed = int(name[len("rotated-N("):-1])
        except ValueError:
            raise KeyError(f"bad seed in {name!r}") from None
        return rotated_n(seed)
    raise KeyError(f"unknown fixture {name!r}; known: {', '.join(names())}")


# -- hierarchical equality task ----------------------------------------------

@dataclass(frozen=True)
class EqualityTaskInstance:
    objects: tuple
    label: int

    @property
    def sameness(self) -> tuple[int, int]:
        return _same(self.objects[0], self.objects[1]), _same(self.objects[2], self.objects[3])


def _same(a, b) -> int:
    if isinstance(a, np.ndarray):
        return int(np.array_equal(a, b))
    return int(a == b)


def _label(objs) -> int:
    s1, s2 = _same(objs[0], objs[1]), _same(objs[2], objs[3])
    return int(s1 == s2)


def gen_equality_task(n: int = 16, encoding: str = "symbolic", dim: int = 8, seed: int = 0,
                      vocabulary: int = 4) -> list[EqualityTaskInstance]:
    """Instances of "are both pairs alike, or both unlike?".

    ``symbolic`` yields the boolean-coded instances: each object is 0 or 1
    and the 16 settings come in the circuit's input order (repeated if
    ``n`` > 16).  ``distributed`` draws objects from a vocabulary of
    unit-norm random vectors of length ``dim``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if encoding == "symbolic":
        base = [tuple((k >> i) & 1 for i in range(4)) for k in range(16)]
        return [EqualityTaskInstance(objs, _label(objs)) for objs in (base[i % 16] for i in range(n))]
    if encoding == "distributed":
        if dim < 1:
            raise ValueError("dim must be at least 1")
        rng = np.random.default_rng(seed)
        vocab = rng.normal(size=(vocabulary, dim))
        vocab /= np.linalg.norm(vocab, axis=1, keepdims=True)
        out = []
        for _ in range(n):
            idx = rng.integers(0, vocabulary, size=4)
            objs = tuple(vocab[i].copy() for i in idx)
            out.append(EqualityTaskInstance(objs, _label(objs)))
        return out
    raise ValueError(f"unknown encoding {encoding!r}")

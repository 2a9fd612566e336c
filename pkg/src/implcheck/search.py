"""Rotation search for distributed alignments of a hidden layer."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from ._kernel import compile_tape, execute
from .abstraction import Alignment, VerificationReport, check_abstraction_under_translation
from .expr import EXACT, Approx, Expr, add, as_rational, const, leq, mul, simplify, substitute, var
from .model import CausalModel, boolean_inputs, run
from .translate import Translation

__all__ = [
    "RotationParam", "SearchConfig", "SearchResult", "Objective", "rotate_layer", "iia", "search",
    "planes", "BudgetExhausted",
]

ORTHO_TOL = 1e-9
_GOLDEN = (math.sqrt(5) - 1) / 2


def planes(n: int) -> list[tuple[int, int]]:
    """Plane order used by RotationParam: by first index, second index descending."""
    return [(i, j) for i in range(n) for j in range(n - 1, i, -1)]


def _givens(n: int, i: int, j: int, theta: float) -> np.ndarray:
    g = np.eye(n)
    c, s = math.cos(theta), math.sin(theta)
    g[i, i] = g[j, j] = c
    g[i, j], g[j, i] = -s, s
    return g


def _check_orthogonal(m: np.ndarray):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("rotation must be a square matrix")
    err = np.max(np.abs(m.T @ m - np.eye(m.shape[0])))
    if err > ORTHO_TOL:
        raise ValueError(f"matrix is not orthogonal (max |R^T R - I| = {err:.3g})")
    if np.linalg.det(m) < 0:
        raise ValueError("matrix has determinant -1, not a rotation")


@dataclass(frozen=True)
class RotationParam:
    """A rotation of R^n as a product of plane rotations, one per plane."""

    n: int
    angles: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if len(self.angles) != self.n * (self.n - 1) // 2:
            raise ValueError(f"need {self.n * (self.n - 1) // 2} angles for n={self.n}")

    @property
    def matrix(self) -> np.ndarray:
        r = np.eye(self.n)
        for (i, j), t in zip(planes(self.n), self.angles):
            r = r @ _givens(self.n, i, j, t)
        return r

    @classmethod
    def identity(cls, n: int) -> "RotationParam":
        return cls(n, (0.0,) * (n * (n - 1) // 2))

    @classmethod
    def from_matrix(cls, m) -> "RotationParam":
        """Angles reproducing ``m`` (which must be a rotation)."""
        m = np.array(m, dtype=float)
        _check_orthogonal(m)
        n = m.shape[0]
        work = m.copy()
        angles = []
        for i, j in planes(n):
            t = math.atan2(work[j, i], work[i, i])
            angles.append(t)
            work = _givens(n, i, j, t).T @ work
        return cls(n, tuple(angles))


def _as_matrix(r) -> np.ndarray | list[list[Fraction]]:
    if isinstance(r, RotationParam):
        return r.matrix
    if isinstance(r, np.ndarray):
        return r
    rows = [list(row) for row in r]
    if rows and all(isinstance(x, (int, Fraction)) for row in rows for x in row):
        return [[as_rational(x) for x in row] for row in rows]
    return np.array(rows, dtype=float)


def _check_rotation(m) -> list[list[Fraction]]:
    """Validate and return exact rational entries."""
    if isinstance(m, np.ndarray):
        _check_orthogonal(m)
        return [[Fraction(float(x)) for x in row] for row in m]
    n = len(m)
    for i in range(n):
        for j in range(n):
            dot = sum(m[k][i] * m[k][j] for k in range(n))
            if abs(float(dot) - (i == j)) > ORTHO_TOL:
                raise ValueError("matrix is not orthogonal")
    if np.linalg.det(np.array(m, dtype=float)) < 0:
        raise ValueError("matrix has determinant -1, not a rotation")
    return m


def rotate_layer(model: CausalModel, layer: Sequence[str], rotation) -> CausalModel:
    """Re-express ``layer`` in rotated coordinates ``z = h R``.

    Layer variable ``j`` keeps its name but now holds ``sum_i R_ij h_i``,
    with the original unit mechanisms inlined; downstream mechanisms read
    ``h_i = sum_j R_ij z_j``.  Float entries are taken as exact binary
    rationals, so the result is behaviourally identical up to float
    rounding of R's orthogonality.
    """
    layer = list(layer)
    r = _check_rotation(_as_matrix(rotation))
    n = len(layer)
    if len(r) != n:
        raise ValueError(f"rotation is {len(r)}x{len(r)} but the layer has {n} variables")
    inside = set(layer)
    for h in layer:
        if not model.domain(h).kind == "real":
            raise ValueError(f"layer variable {h} is not real-valued")
        if inside & set(model.parents(h)):
            raise ValueError(f"layer variable {h} reads another layer variable")

    def comb(coeffs: Sequence[Fraction], exprs: Sequence[Expr]) -> Expr:
        terms = [e if c == 1 else mul(const(c), e) for c, e in zip(coeffs, exprs) if c != 0]
        if not terms:
            return const(0)
        return simplify(terms[0] if len(terms) == 1 else add(*terms))

    old = [model.mechanism(h) for h in layer]
    mech = dict(model.mechanisms)
    for j, h in enumerate(layer):
        mech[h] = comb([r[i][j] for i in range(n)], old)
    back = {h: comb(r[i], [var(z) for z in layer]) for i, h in enumerate(layer)}
    for v in model.variables:
        if v not in inside and inside & set(model.parents(v)):
            mech[v] = simplify(substitute(model.mechanism(v), back))
    return model.replace(mech)


# -- objective ---------------------------------------------------------------

class BudgetExhausted(Exception):
    pass


@dataclass
class SearchConfig:
    """What to search for.

    ``cells`` maps each rotated high-level variable to the layer
    coordinates it owns; together they must cover the layer exactly.
    ``input_map`` maps high-level inputs to low-level inputs, ``output``
    names the low-level output and ``output_map`` turns it into the
    high-level output ``high_output``.
    """

    layer: Sequence[str]
    cells: Mapping[str, Sequence[int]]
    input_map: Mapping[str, str]
    output: str
    output_map: Expr
    high_output: str
    budget: int = 5000
    seed: int = 0
    tol: float = 1e-16
    threshold_tol: float = 1e-7

    def __post_init__(self):
        self.layer = list(self.layer)
        self.cells = {k: list(v) for k, v in self.cells.items()}
        covered = sorted(i for v in self.cells.values() for i in v)
        if covered != list(range(len(self.layer))):
            raise ValueError("cells must cover the layer coordinates exactly once")
        if self.budget <= 0:
            raise ValueError("budget must be positive")

    @classmethod
    def for_network(cls, **overrides) -> "SearchConfig":
        """Defaults for the ReLU network against the XNOR circuit."""
        base = dict(layer=["H1_1", "H1_2", "H1_3", "H1_4"], cells={"B1": [0, 1], "B2": [2, 3]},
                    input_map={f"A{i}": f"X{i}" for i in range(1, 5)}, output="Y",
                    output_map=leq(var("Y"), const(0)), high_output="C")
        base.update(overrides)
        return cls(**base)


class Objective:
    """Interchange agreement and a smooth surrogate for a given rotation.

    For every (cell, base, source) the layer is rotated, the cell's rotated
    coordinates are copied from the source run, the layer is rotated back
    and the rest of the network runs on the result.  The score is the
    share of final labels matching the high-level interchange result.  The
    surrogate is the squared distance between the patched layer and the
    layer the network computes on the input that mixes the base with the
    source on the inputs upstream of the cell's high-level variable; it is
    zero exactly when patching acts like changing those inputs.
    """

    def __init__(self, model: CausalModel, high: CausalModel, config: SearchConfig,
                 inputs: Sequence[Mapping] | None = None):
        self.config = config
        cfg = config
        high_inputs = list(high.inputs)
        if set(cfg.input_map) != set(high_inputs):
            raise ValueError("input_map must cover the high-level inputs")
        if inputs is None:
            inputs = [{cfg.input_map[h]: v for h, v in d.items()} for d in boolean_inputs(high_inputs)]
        self.inputs = [dict(x) for x in inputs]
        low_in = [cfg.input_map[h] for h in high_inputs]
        n = len(self.inputs)
        layer = cfg.layer
        up = set()
        for h in layer:
            up |= model.ancestors(h)
        self.up_tape = compile_tape(model, sorted((up | set(layer)) - set(model.inputs)))
        down = {v for v in model.variables if v not in up and v not in layer and v not in model.inputs}
        self.down_tape = compile_tape(model, sorted(down), {"__label": cfg.output_map})

        def layer_at(xs):
            vals = self.up_tape.allocate(len(xs))
            for name in self.up_tape.free:
                vals[self.up_tape.slots[name]] = [float(x[name]) for x in xs]
            execute(self.up_tape, vals, cfg.threshold_tol)
            return np.stack([vals[self.up_tape.slots[h]] for h in layer], axis=1)

        self.G = layer_at(self.inputs)
        hruns = [run(high, {h: x[cfg.input_map[h]] for h in high_inputs}) for x in self.inputs]
        self.cell_idx = []
        expected, mixed, base_idx = [], [], []
        for hv, idx in cfg.cells.items():
            feeders = [cfg.input_map[a] for a in high_inputs if a in high.ancestors(hv)]
            self.cell_idx.append(np.array(idx))
            for b in range(n):
                for s in range(n):
                    hin = {h: self.inputs[b][cfg.input_map[h]] for h in high_inputs}
                    expected.append(run(high, {**hin, hv: hruns[s][hv]})[cfg.high_output])
                    mixed.append({**self.inputs[b], **{f: self.inputs[s][f] for f in feeders}})
                    base_idx.append(b)
        self.expected = np.array(expected, dtype=float)
        self.G_mixed = layer_at(mixed)
        self.base_idx = np.array(base_idx)
        self.n = n
        self.evaluations = 0
        self.down_free = [name for name in self.down_tape.free]
        self._down_base = self.down_tape.allocate(len(base_idx))
        for name in self.down_free:
            if name not in layer:
                self._down_base[self.down_tape.slots[name]] = [float(self.inputs[b][name]) for b in base_idx]

    def __call__(self, r: np.ndarray) -> tuple[float, float]:
        if self.evaluations >= self.config.budget:
            raise BudgetExhausted
        self.evaluations += 1
        return self.score(r)

    def score(self, r: np.ndarray) -> tuple[float, float]:
        n = self.n
        z = self.G @ r
        parts = []
        for idx in self.cell_idx:
            zb = np.repeat(z, n, axis=0)
            zs = np.tile(z, (n, 1))
            zb[:, idx] = zs[:, idx]
            parts.append(zb)
        g = np.concatenate(parts) @ r.T
        loss = float(((g - self.G_mixed) ** 2).sum())
        vals = self._down_base.copy()
        for k, h in enumerate(self.config.layer):
            if h in self.down_tape.slots:
                vals[self.down_tape.slots[h]] = g[:, k]
        execute(self.down_tape, vals, self.config.threshold_tol)
        labels = vals[self.down_tape.slots["__label"]]
        return float(np.mean(labels == self.expected)), loss


def iia(model: CausalModel, high: CausalModel, rotation, config: SearchConfig,
        inputs: Sequence[Mapping] | None = None) -> float:
    """Interchange-intervention agreement of ``model`` rotated by ``rotation``."""
    r = rotation.matrix if isinstance(rotation, RotationParam) else np.asarray(rotation, dtype=float)
    _check_orthogonal(r)
    return Objective(model, high, config, inputs).score(r)[0]


# -- search ------------------------------------------------------------------

@dataclass
class SearchResult:
    rotation: RotationParam
    matrix: np.ndarray
    iia: float
    loss: float
    evaluations: int
    sweeps: int
    restarts: int
    certified: bool
    translation: Translation | None = None
    alignment: Alignment | None = None
    report: VerificationReport | None = None
    exact: bool = False
    seconds: float = 0.0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iia": self.iia,
            "loss": self.loss,
            "evaluations": self.evaluations,
            "sweeps": self.sweeps,
            "restarts": self.restarts,
            "certified": self.certified,
            "exact": self.exact,
            "angles": list(self.rotation.angles),
            "matrix": [[float(x) for x in row] for row in self.matrix],
            "notes": list(self.notes),
            "report": self.report.to_dict() if self.report is not None else None,
        }


def _better(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] > b[0] or (a[0] == b[0] and a[1] < b[1])


def _ascend(obj: Objective, rng: np.random.Generator, dim: int, tol: float):
    """Cyclic plane sweeps; returns (R, score, sweeps, restarts)."""
    r = np.eye(dim)
    cur = obj(r)
    best = (cur, r)
    sweeps = restarts = 0
    grid = np.linspace(-math.pi, math.pi, 9)[:-1]
    half = 2 * math.pi / 8
    try:
        while not (cur[0] == 1.0 and cur[1] < tol):
            prev = cur[1]
            for i, j in planes(dim):
                def f(t, r=r, i=i, j=j):
                    return obj(r @ _givens(dim, i, j, t))[1]
                vals = [f(t) for t in grid]
                k = int(np.argmin(vals))
                a, b = grid[k] - half, grid[k] + half
                c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
                fc, fd = f(c), f(d)
                while b - a > 1e-9:
                    if fc < fd:
                        b, d, fd = d, c, fc
                        c = b - _GOLDEN * (b - a)
                        fc = f(c)
                    else:
                        a, c, fc = c, d, fd
                        d = a + _GOLDEN * (b - a)
                        fd = f(d)
                t = (a + b) / 2
                cand = r @ _givens(dim, i, j, t)
                score = obj(cand)
                if score[1] <= cur[1]:
                    r, cur = cand, score
                    if _better(cur, best[0]):
                        best = (cur, r)
            sweeps += 1
            if cur[0] == 1.0 and cur[1] < tol:
                break
            if prev - cur[1] < 1e-12 * max(prev, 1e-30):
                q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
                if np.linalg.det(q) < 0:
                    q[:, 0] *= -1
                r = q
                cur = obj(r)
                restarts += 1
    except BudgetExhausted:
        pass
    if _better(cur, best[0]):
        best = (cur, r)
    return best[1], best[0], sweeps, restarts


def _snap(r: np.ndarray) -> list[list[int]] | None:
    """The signed permutation ``r`` rounds to, if it is one."""
    rounded = np.rint(r)
    if np.max(np.abs(r - rounded)) > 1e-6:
        return None
    if not all(sorted(np.abs(row).tolist()) == [0.0] * (len(row) - 1) + [1.0] for row in rounded):
        return None
    return [[int(x) for x in row] for row in rounded]


def certify(model: CausalModel, high: CausalModel, r, config: SearchConfig, inputs=None,
            jobs: int = 1) -> tuple[VerificationReport, Translation, Alignment, bool]:
    """Check the rotated alignment as an abstraction under translation.

    A rotation that rounds to a signed permutation is checked exactly;
    otherwise its float entries are used as exact binary rationals and the
    check runs in tolerance mode.
    """
    cfg = config
    snapped = _snap(np.asarray(r, dtype=float))
    exact = snapped is not None
    matrix = snapped if exact else [[Fraction(float(x)) for x in row] for row in np.asarray(r)]
    mode = EXACT if exact else Approx(cfg.threshold_tol, 1e-4)
    names = [f"Z{k + 1}" for k in range(len(cfg.layer))]
    t = Translation.linear(model, cfg.layer, names, matrix)
    cells = {h: (low,) for h, low in cfg.input_map.items()}
    maps: dict[str, Expr | None] = {h: var(low) for h, low in cfg.input_map.items()}
    for hv, idx in cfg.cells.items():
        cells[hv] = tuple(names[k] for k in idx)
        maps[hv] = None
    cells[cfg.high_output] = (cfg.output,)
    maps[cfg.high_output] = cfg.output_map
    alignment = Alignment(cells, maps)
    if inputs is None:
        inputs = [{cfg.input_map[h]: v for h, v in d.items()} for d in boolean_inputs(list(high.inputs))]
    report = check_abstraction_under_translation(model, high, t, alignment, inputs, mode=mode, jobs=jobs,
                                                 name="rotation search certificate")
    return report, t, alignment, exact


def search(model: CausalModel, high: CausalModel, config: SearchConfig, inputs: Sequence[Mapping] | None = None,
           jobs: int = 1) -> SearchResult:
    """Find a layer rotation under which ``high`` abstracts ``model``.

    Cyclic sweeps over coordinate planes: each plane angle is chosen by a
    grid scan and golden-section refinement of the surrogate loss, with a
    random restart (from ``config.seed``) whenever a sweep stalls.  Stops
    once every interchange label agrees and the loss is below
    ``config.tol``, or when the evaluation budget runs out.  A perfect
    rotation is then certified with :func:`certify`.
    """
    start = time.perf_counter()
    obj = Objective(model, high, config, inputs)
    rng = np.random.default_rng(config.seed)
    dim = len(config.layer)
    r, (score, loss), sweeps, restarts = _ascend(obj, rng, dim, config.tol)
    result = SearchResult(RotationParam.from_matrix(r), r, score, loss, obj.evaluations, sweeps, restarts, False)
    if score == 1.0:
        report, t, alignment, exact = certify(model, high, r, config, inputs, jobs)
        result.report, result.translation, result.alignment, result.exact = report, t, alignment, exact
        result.certified = report.passed
        if not report.passed:
            result.notes.append("agreement is perfect but the certificate failed")
    else:
        result.notes.append("budget exhausted before perfect agreement; best rotation is not certified")
    result.seconds = time.perf_counter() - start
    return result

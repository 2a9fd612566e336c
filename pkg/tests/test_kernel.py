import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings

from implcheck import _kernel
from implcheck import fixtures as fx
from implcheck._kernel import _tape_py, compile_tape, execute
from implcheck.model import boolean_inputs, run

from strategies import boolean_models

try:
    from implcheck._kernel import _tape as _tape_c
except ImportError:  # pragma: no cover
    _tape_c = None

BACKENDS = [_tape_py] + ([_tape_c] if _tape_c is not None else [])


def _run_batch(impl, model, xs):
    tape = compile_tape(model, [v for v in model.variables if v not in model.inputs])
    vals = tape.allocate(len(xs))
    for name in tape.free:
        vals[tape.slots[name]] = [float(x[name]) for x in xs]
    impl.run_tape(tape.code, tape.consts, vals, 1e-7)
    return tape, vals


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("name", ["circuit-M", "circuit-M-star", "network-N", "network-N-printed"])
def test_tape_matches_exact_run(impl, name):
    model = fx.build(name)
    xs = boolean_inputs(model.inputs)
    tape, vals = _run_batch(impl, model, xs)
    for k, x in enumerate(xs):
        want = run(model, x)
        for v in model.variables:
            if v in tape.slots:
                assert vals[tape.slots[v], k] == pytest.approx(float(want[v]), abs=1e-12)


@given(boolean_models)
@settings(max_examples=40, deadline=None)
def test_backends_agree_on_random_models(m):
    xs = boolean_inputs(m.inputs)
    outs = [_run_batch(impl, m, xs)[1] for impl in BACKENDS]
    for other in outs[1:]:
        assert np.array_equal(outs[0], other)


def test_execute_rejects_bad_arrays(N):
    tape = compile_tape(N, ["H1_1"])
    with pytest.raises(ValueError):
        execute(tape, np.zeros((tape.size, 2), dtype=np.float32))
    with pytest.raises(ValueError):
        execute(tape, np.zeros((2, tape.size)).T)


def test_backend_is_reported():
    assert _kernel.BACKEND in ("cython", "python")


def test_environment_forces_pure_backend():
    env = {**os.environ, "IMPLCHECK_PURE": "1"}
    out = subprocess.run([sys.executable, "-c", "from implcheck._kernel import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"

"""Compare the compiled tape interpreter with the numpy fallback.

Usage: python benchmarks/bench_tape.py [--batch 768] [--repeat 200]
"""
import argparse
import timeit

import numpy as np

from implcheck import fixtures as fx
from implcheck._kernel import _tape_py, compile_tape

try:
    from implcheck._kernel import _tape as _tape_c
except ImportError:
    _tape_c = None


def workload(batch: int):
    model = fx.network_n()
    tape = compile_tape(model, [v for v in model.variables if v not in model.inputs])
    rng = np.random.default_rng(0)
    vals = tape.allocate(batch)
    for name in tape.free:
        vals[tape.slots[name]] = rng.integers(0, 2, batch)
    return tape, vals


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=768, help="columns per call (768 = one objective evaluation)")
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    tape, vals = workload(args.batch)
    backends = [("python", _tape_py)] + ([("cython", _tape_c)] if _tape_c else [])
    results = {}
    for name, impl in backends:
        buf = vals.copy()
        t = min(timeit.repeat(lambda: impl.run_tape(tape.code, tape.consts, buf, 1e-7), number=args.repeat, repeat=3))
        results[name] = t / args.repeat
        print(f"{name:7s} {results[name] * 1e6:9.1f} us/call  ({len(tape.code)} instructions, batch {args.batch})")
    if len(results) == 2:
        ref, fast = vals.copy(), vals.copy()
        _tape_py.run_tape(tape.code, tape.consts, ref, 1e-7)
        _tape_c.run_tape(tape.code, tape.consts, fast, 1e-7)
        assert np.array_equal(ref, fast)
        print(f"speedup {results['python'] / results['cython']:.2f}x, outputs identical")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()

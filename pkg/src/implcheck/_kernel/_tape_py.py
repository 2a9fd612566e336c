"""Pure numpy tape interpreter; used when the compiled kernel is absent."""
import numpy as np

CONST, COPY, ADD, MUL, NEG, RELU, XNOR, AND, OR, NOT, EQ, LEQ = range(12)


def run_tape(code, consts, values, tol):
    """Execute ``code`` rows (op, a, b, out) over ``values[slot, batch]`` in place."""
    for op, a, b, out in code:
        if op == CONST:
            values[out] = consts[a]
        elif op == COPY:
            values[out] = values[a]
        elif op == ADD:
            np.add(values[a], values[b], out=values[out])
        elif op == MUL:
            np.multiply(values[a], values[b], out=values[out])
        elif op == NEG:
            np.negative(values[a], out=values[out])
        elif op == RELU:
            np.maximum(values[a], 0.0, out=values[out])
        elif op == XNOR:
            values[out] = (values[a] != 0) == (values[b] != 0)
        elif op == AND:
            values[out] = (values[a] != 0) & (values[b] != 0)
        elif op == OR:
            values[out] = (values[a] != 0) | (values[b] != 0)
        elif op == NOT:
            values[out] = values[a] == 0
        elif op == EQ:
            values[out] = np.abs(values[a] - values[b]) <= tol
        elif op == LEQ:
            values[out] = values[a] <= values[b] + tol
        else:
            raise ValueError(f"bad opcode {op}")

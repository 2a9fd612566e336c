# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled tape interpreter; same contract as the numpy version."""
from libc.math cimport fabs

cdef enum:
    CONST, COPY, ADD, MUL, NEG, RELU, XNOR, AND, OR, NOT, EQ, LEQ


def run_tape(const long long[:, :] code, const double[:] consts, double[:, :] values, double tol):
    cdef Py_ssize_t k, j, n = values.shape[1]
    cdef long long op, a, b, out
    cdef double x, y
    for k in range(code.shape[0]):
        op = code[k, 0]
        a = code[k, 1]
        b = code[k, 2]
        out = code[k, 3]
        if op == CONST:
            for j in range(n):
                values[out, j] = consts[a]
        elif op == COPY:
            for j in range(n):
                values[out, j] = values[a, j]
        elif op == ADD:
            for j in range(n):
                values[out, j] = values[a, j] + values[b, j]
        elif op == MUL:
            for j in range(n):
                values[out, j] = values[a, j] * values[b, j]
        elif op == NEG:
            for j in range(n):
                values[out, j] = -values[a, j]
        elif op == RELU:
            for j in range(n):
                x = values[a, j]
                values[out, j] = x if x > 0 else 0.0
        elif op == XNOR:
            for j in range(n):
                values[out, j] = 1.0 if (values[a, j] != 0) == (values[b, j] != 0) else 0.0
        elif op == AND:
            for j in range(n):
                values[out, j] = 1.0 if (values[a, j] != 0 and values[b, j] != 0) else 0.0
        elif op == OR:
            for j in range(n):
                values[out, j] = 1.0 if (values[a, j] != 0 or values[b, j] != 0) else 0.0
        elif op == NOT:
            for j in range(n):
                values[out, j] = 1.0 if values[a, j] == 0 else 0.0
        elif op == EQ:
            for j in range(n):
                values[out, j] = 1.0 if fabs(values[a, j] - values[b, j]) <= tol else 0.0
        elif op == LEQ:
            for j in range(n):
                values[out, j] = 1.0 if values[a, j] <= values[b, j] + tol else 0.0
        else:
            raise ValueError(f"bad opcode {op}")

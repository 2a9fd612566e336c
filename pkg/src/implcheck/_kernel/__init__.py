"""Batched evaluation of straight-line mechanism code ("tapes")."""
from .tape import BACKEND, Tape, compile_tape, execute

__all__ = ["BACKEND", "Tape", "compile_tape", "execute"]

"""Check implementation claims between causal models.

Build models from mechanisms, intervene on them, and verify exact
transformations, constructive abstractions, translations and
representation audits; search layer rotations for distributed alignments.
"""
__version__ = "0.1.0"

from .abstraction import (Alignment, VerificationReport, Witness, check_abstraction_under_translation,
                          check_constructive_abstraction, check_exact_transformation, tau_of)
from .expr import Approx, EXACT, parse, to_sexpr
from .intervene import InterchangeSpec, Interventional, apply, check_algebra_laws, interchange
from .model import BOOL, REAL, CausalModel, Domain, boolean_inputs, run, validate
from .translate import Translation, intervention_family, pull_back, translate_model

__all__ = [
    "__version__", "Alignment", "VerificationReport", "Witness", "check_abstraction_under_translation",
    "check_constructive_abstraction", "check_exact_transformation", "tau_of", "Approx", "EXACT", "parse",
    "to_sexpr", "InterchangeSpec", "Interventional", "apply", "check_algebra_laws", "interchange", "BOOL",
    "REAL", "CausalModel", "Domain", "boolean_inputs", "run", "validate", "Translation",
    "intervention_family", "pull_back", "translate_model",
]

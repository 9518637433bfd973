"""SMT encodings of bounded runs and an external-solver driver."""
from .bounded import (ModelIncomplete, SmtScript, UniverseTooLarge, decode_trace, decoded_bindings,
                      encode_bounded)
from .causal import RestrictionViolated, check_restrictions, encode_causal
from .solver import (SOLVER_ENV, Sat, SolverError, SolverUnknown, Unsat, default_command, parse_values,
                     run_solver)

__all__ = [
    "ModelIncomplete", "SmtScript", "UniverseTooLarge", "decode_trace", "decoded_bindings",
    "encode_bounded", "SOLVER_ENV", "Sat", "SolverError", "SolverUnknown", "Unsat",
    "default_command", "parse_values", "run_solver", "RestrictionViolated", "check_restrictions",
    "encode_causal",
]

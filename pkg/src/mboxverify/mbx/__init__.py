"""Middlebox modeling language: parser, interpreter, builtins, axioms."""
from .ast import FailurePolicy, MiddleboxModel
from .axioms import axiom_templates
from .dsl import ParseError, SemanticError, parse_model
from .interp import (FixedOracle, MapLookupMiss, MbxState, MiddleboxInstance,
                     OracleValueOutOfRange, StepResult, fail_state, initial_state, instantiate,
                     recover_state, step)
from .library import DECLARED_CLASS, UnknownBuiltin, builtin

__all__ = [
    "FailurePolicy", "MiddleboxModel", "ParseError", "SemanticError", "parse_model",
    "FixedOracle", "MapLookupMiss", "MbxState", "MiddleboxInstance", "OracleValueOutOfRange",
    "StepResult", "fail_state", "recover_state", "initial_state", "instantiate", "step", "DECLARED_CLASS", "UnknownBuiltin",
    "builtin", "axiom_templates",
]

"""Expected-runtime analysis for quantum while-programs."""
from .linalg import NeumannError, SpectralError
from .parser import ParseError, parse, pretty_print
from .program import Layout, QuantumVariable, validate
from .runtime import (AnalysisReport, RuntimeAnalyzer, analyze, ert_observable, expected_runtime,
                      runtime_bound, termination_operator, termination_projector)
from .semantics import DensityMatrix, Observable, denote

__all__ = [
    "AnalysisReport", "DensityMatrix", "Layout", "NeumannError", "Observable", "ParseError",
    "QuantumVariable", "RuntimeAnalyzer", "SpectralError", "analyze", "denote", "ert_observable",
    "expected_runtime", "parse", "pretty_print", "runtime_bound", "termination_operator",
    "termination_projector", "validate",
]

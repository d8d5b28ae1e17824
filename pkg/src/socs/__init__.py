"""Probabilistic circuits with signed or complex parameters:
products and squares of compatible circuits, sums of compatible squares,
log-space evaluation, training and exact model conversions."""

from .circuit import Circuit, CircuitBuilder, check_compatible, check_monotone, check_smooth_decomposable
from .compose import condition, conjugate, multiply, musocs, socs_sum, square
from .domains import BOOLEAN, REAL, Finite, Interval, Variable
from .errors import (BudgetExceeded, CircuitError, ConfigError, DomainError, FieldError,
                     IncompatibleError, MonotonicityError, NotPSD, NumericalError, ShapeError,
                     StructureError, UnsupportedPair)
from .evaluate import backward, evaluate, evaluate_batch, log_evaluate, marginalize, partition_function
from .logspace import LogComplex, logsumexp_complex
from .tensorized import LayerSpec, Model, RegionGraph, build_model, quad_tree, random_binary_tree
from .training import TrainConfig, fit, nll_batch

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "CircuitBuilder",
    "check_compatible",
    "check_monotone",
    "check_smooth_decomposable",
    "condition",
    "conjugate",
    "multiply",
    "musocs",
    "socs_sum",
    "square",
    "BOOLEAN",
    "REAL",
    "Finite",
    "Interval",
    "Variable",
    "BudgetExceeded",
    "CircuitError",
    "ConfigError",
    "DomainError",
    "FieldError",
    "IncompatibleError",
    "MonotonicityError",
    "NotPSD",
    "NumericalError",
    "ShapeError",
    "StructureError",
    "UnsupportedPair",
    "backward",
    "evaluate",
    "evaluate_batch",
    "log_evaluate",
    "marginalize",
    "partition_function",
    "LogComplex",
    "logsumexp_complex",
    "LayerSpec",
    "Model",
    "RegionGraph",
    "build_model",
    "quad_tree",
    "random_binary_tree",
    "TrainConfig",
    "fit",
    "nll_batch",
]

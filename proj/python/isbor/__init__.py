"""Sparse Bayesian ordinal regression with RBF bases."""

from ._isbor import (
    ConvergenceError,
    InputError,
    Model,
    NumericError,
    ParseError,
    cross_validate,
    generate_synthetic,
    mae,
)

__all__ = [
    "ConvergenceError",
    "InputError",
    "Model",
    "NumericError",
    "ParseError",
    "cross_validate",
    "generate_synthetic",
    "mae",
]

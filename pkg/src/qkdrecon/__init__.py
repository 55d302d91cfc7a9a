"""Reconciliation-overhead models for QKD post-processing.

Analytic loss formulas, buffer optimization, a seeded block-pipeline
simulator, and block-error-rate trace replay for sampling-based error
estimation, post-correction verification, and their combination.
"""

from .errors import DomainError, TraceFormatError
from .specfun import binary_entropy, erf, erfc, erfcinv, erfinv, normal_cdf
from .analytic import (
    LossReport,
    Method,
    StrategyConfig,
    SystemParams,
    analyze,
    combination_loss,
    eers_loss,
    excessive_loss,
    verification_loss,
)
from .optimize import OptimizationResult, optimize_buffer, optimize_combination, sweep

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "TraceFormatError",
    "binary_entropy",
    "erf",
    "erfc",
    "erfcinv",
    "erfinv",
    "normal_cdf",
    "LossReport",
    "Method",
    "StrategyConfig",
    "SystemParams",
    "analyze",
    "combination_loss",
    "eers_loss",
    "excessive_loss",
    "verification_loss",
    "OptimizationResult",
    "optimize_buffer",
    "optimize_combination",
    "sweep",
    "__version__",
]

"""Kaluza-Klein bundle laboratory: geodesics, their projections, and fiber-mode reductions."""

from .config import ScenarioConfig
from .errors import (ComparisonError, ConfigError, DomainError, ExpressionError, FrameError, IntegrationError,
                     KKError, NonConvergenceError, NormalizationError, SingularityError)
from .geometry import BundleMetric, FieldBundle

__all__ = [
    "BundleMetric", "ComparisonError", "ConfigError", "DomainError", "ExpressionError", "FieldBundle",
    "FrameError", "IntegrationError", "KKError", "NonConvergenceError", "NormalizationError", "ScenarioConfig",
    "SingularityError",
]
__version__ = "0.1.0"

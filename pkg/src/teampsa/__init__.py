"""Team proficiency self-assessment for centralized multi-agent range tracking."""

from .errors import (
    ConditioningError,
    ConfigError,
    DomainError,
    PsaError,
    SingularGeometryError,
    TrialError,
)

__version__ = "0.1.0"

__all__ = [
    "ConditioningError",
    "ConfigError",
    "DomainError",
    "PsaError",
    "SingularGeometryError",
    "TrialError",
    "__version__",
]

"""Distribution bounds for the cumulative capacity of fading channels."""
from .errors import CapabilityError, CapboundError, ConfigError, DomainError, ModelError, NoRootError, NumericError
from .marginals import Marginal

__version__ = "0.1.0"

__all__ = [
    "Marginal",
    "CapboundError",
    "DomainError",
    "CapabilityError",
    "NumericError",
    "NoRootError",
    "ModelError",
    "ConfigError",
]

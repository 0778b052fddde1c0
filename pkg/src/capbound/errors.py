"""Exception hierarchy shared by all capbound modules."""


class CapboundError(Exception):
    """Base class for every error raised by capbound."""


class DomainError(CapboundError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class CapabilityError(CapboundError):
    """The request is well-posed but beyond what the implementation supports."""


class NumericError(CapboundError, ArithmeticError):
    """A numerical routine overflowed or failed to converge."""


class NoRootError(NumericError):
    """A Lundberg-type equation has no positive root."""


class ModelError(CapboundError, ValueError):
    """A model (marginal, copula, Markov additive process) is invalid."""


class ConfigError(CapboundError, ValueError):
    """A configuration or input file could not be parsed or validated."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

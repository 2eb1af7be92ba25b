"""Exception types shared across the package."""


class WindEmpcError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(WindEmpcError, ValueError):
    """A physical parameter or configuration value is invalid."""


class DomainError(WindEmpcError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class StallError(WindEmpcError, RuntimeError):
    """The rotor was driven to zero or negative speed during integration."""


class InfeasibleTargetError(WindEmpcError, ValueError):
    """A requested operating target cannot be realized by any admissible pitch."""


class FitError(WindEmpcError, RuntimeError):
    """A least-squares fit could not be computed (rank-deficient samples)."""


class EnvelopeConstructionError(WindEmpcError, RuntimeError):
    """A piecewise-linear envelope failed its underestimation check at build time."""


class FileFormatError(WindEmpcError, ValueError):
    """A data or configuration file does not match the expected format."""

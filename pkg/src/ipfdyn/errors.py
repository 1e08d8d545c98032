"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`IpfError`.
:class:`NumericalError` marks failures of the mathematics itself (poles,
missing roots, degenerate diffusion); the CLI maps those to exit code 3.
"""


class IpfError(Exception):
    """Base class for all package errors."""


class ConfigurationError(IpfError, ValueError):
    """Invalid user-supplied configuration (grid, scenario file, flags)."""


class SimulationError(IpfError):
    """Non-finite value produced while integrating a path."""

    def __init__(self, message, t=None, path=None):
        super().__init__(message)
        self.t = t
        self.path = path


class GridRangeError(IpfError, ValueError):
    """Requested time is not a node of the ensemble grid."""


class InsufficientSampleError(IpfError, ValueError):
    """Too few paths for a covariance estimate."""


class NumericalError(IpfError, ArithmeticError):
    """Base for failures of the underlying mathematics."""


class DegenerateDiffusionError(NumericalError):
    """Diffusion matrix is singular where the functional is evaluated."""


class DomainError(NumericalError, ValueError):
    """Argument outside the domain of a closed-form measure (non-PD input)."""


class IdentificationError(NumericalError):
    """Model operator cannot be identified from the supplied moments."""


class IllConditionedIdentificationError(IdentificationError):
    """Covariance too ill-conditioned to invert reliably."""


class PoleError(NumericalError):
    """Evaluation at (or numerically at) a pole of ``2 - exp(.)``."""


class NoRootError(NumericalError):
    """A transcendental equation has no root inside the scanned bracket."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class NoSwitchFoundError(NoRootError):
    """No switching moment inside the search window."""


class UnsupportedDimensionError(IpfError, ValueError):
    """Operation defined only for a specific state dimension."""


class UndefinedAngleError(NumericalError):
    """Consolidation angle with zero denominator."""

"""Exception hierarchy shared by all modules."""


class LPError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(LPError, ValueError):
    """Invalid parameters or configuration."""


class AlignmentError(LPError, ValueError):
    """A time value does not fall on the grid."""


class CoverageError(LPError, ValueError):
    """A requested window is not covered by the available data."""


class DomainError(LPError, ValueError):
    """Arguments outside the domain of an operator or formula."""


class SpectrumProximityError(DomainError):
    """Resolvent requested at a point not to the right of the spectrum."""


class NumericalError(LPError, ArithmeticError):
    """A linear solve or quadrature failed."""


class RangeError(LPError, OverflowError):
    """Exponent argument too large for double precision."""


class ConvergenceError(LPError, RuntimeError):
    """An iterative procedure did not converge."""


class DivergenceError(LPError, RuntimeError):
    """A trajectory left the admissible range."""


class AdmissionError(LPError, RuntimeError):
    """A solver was invoked without a passing gap certificate."""


class CertificationMismatchError(LPError, RuntimeError):
    """Observed contraction is worse than the certified factor."""


class CapabilityError(LPError, TypeError):
    """An optional capability (such as a Jacobian) is missing."""


class OracleError(LPError, RuntimeError):
    """The reference solver failed."""

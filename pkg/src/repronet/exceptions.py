"""Exception hierarchy shared across the package.

CLI exit codes are derived from these classes: configuration problems exit
with 2, numeric failures with 3, and infeasible privacy calibrations with 4.
"""


class RepronetError(Exception):
    """Base class for all package errors."""


class ConfigError(RepronetError):
    """Invalid scenario configuration, file schema, or input file."""

    exit_code = 2


class NumericError(RepronetError):
    """Numerical failure: instability, non-convergence, degenerate inputs."""

    exit_code = 3


class IntegrationError(NumericError):
    """ODE integration produced non-finite or invalid state values."""


class ConvergenceError(NumericError):
    """Iterative solver failed to converge within its iteration budget."""


class UndefinedRatioError(NumericError):
    """An effective reproduction number was requested with zero infection."""


class DegenerateTruncationError(NumericError):
    """Truncation window has numerically zero probability mass."""


class PrivacyBoundsError(NumericError):
    """A value handed to the randomizer lies outside its configured box."""


class CalibrationInfeasibleError(RepronetError):
    """No noise scale satisfies the privacy inequality for these inputs."""

    exit_code = 4


class ProtocolError(RepronetError):
    """Message-flow violation or missing report in the aggregation pipeline."""

    exit_code = 3

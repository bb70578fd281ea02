"""Exception hierarchy shared by all modules."""


class BeaconLabError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BeaconLabError):
    """Malformed, unknown or inconsistent configuration.

    ``line`` is the 1-based line in the source file when it can be located.
    """

    def __init__(self, message: str, *, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")


class DomainError(BeaconLabError, ValueError):
    """Input outside the mathematical domain of an operation."""


class CalibrationError(BeaconLabError):
    """A calibration target is infeasible or a residual exceeds its tolerance."""

    def __init__(self, message: str, anchor: str | None = None, residuals=None):
        self.anchor = anchor
        self.residuals = residuals  # calibration residual table, when available
        super().__init__(message)


class InsufficientDataError(BeaconLabError, ValueError):
    """Too few observations (or groups) for a statistic."""


class UndefinedStatisticError(BeaconLabError, ValueError):
    """A statistic is undefined for the data, e.g. zero variance."""

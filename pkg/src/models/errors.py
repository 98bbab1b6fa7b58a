"""Exception hierarchy shared by the library and the CLI."""


class QkdRateError(Exception):
    """Base class for every error raised by qkd-rate."""
    pass


class DomainError(QkdRateError, ValueError):
    """Raised when an argument lies outside a function's domain."""
    pass


class UndefinedRateError(DomainError):
    """Raised when a rate would divide by a zero yield or gain."""
    pass


class ConfigError(QkdRateError, ValueError):
    """Raised when a parameter record or engine configuration is invalid."""
    pass


class DegenerateStatisticsError(QkdRateError, ValueError):
    """Raised when an intensity received no sifted rounds."""

    def __init__(self, message: str, label: str | None = None):
        self.label = label
        super().__init__(message)


class InconsistentStatisticsError(QkdRateError, ValueError):
    """Raised when no yield/error assignment reproduces the statistics."""

    DEFAULT_MESSAGE = "statistics inconsistent with any yield/error assignment"

    def __init__(self, message: str | None = None):
        super().__init__(message or self.DEFAULT_MESSAGE)


class LpNumericalError(QkdRateError, RuntimeError):
    """Raised when the simplex solver cannot certify a status.

    ``lower_bound`` is still a valid bound on the optimum when set: it comes
    from row multipliers, which bound the objective whatever their quality.
    """

    def __init__(
        self, message: str, pivots: int | None = None, lower_bound: float | None = None
    ):
        self.pivots = pivots
        self.lower_bound = lower_bound
        super().__init__(message)


class LabelMismatchError(QkdRateError, ValueError):
    """Raised when observed and expected statistics carry different labels."""
    pass


class StatsFileParseError(QkdRateError, ValueError):
    """Raised when a statistics, sweep or protocol file cannot be loaded."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        if path is not None:
            super().__init__(f"{path}: {message}")
        else:
            super().__init__(message)

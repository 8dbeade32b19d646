"""Exception hierarchy shared by every stage of the simulator."""


class QEraserError(Exception):
    """Base class for all errors raised by :mod:`qeraser`."""


class DomainError(QEraserError, ValueError):
    """An argument lies outside the domain of the operation."""


class OrderingError(DomainError):
    """A record stream that must be time-ordered is not."""


class BinningError(DomainError):
    """Histograms or bin edges do not agree."""


class FitError(QEraserError, RuntimeError):
    """The fringe fit could not produce a usable estimate.

    ``diagnostics`` carries whatever the fitter knew when it gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(QEraserError, ValueError):
    """Invalid or missing run configuration; ``key`` names the culprit."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ResourceError(QEraserError, MemoryError):
    """The requested run would not fit in memory."""

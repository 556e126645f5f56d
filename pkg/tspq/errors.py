"""Exceptions raised by tspq.

All of them derive from ``TspqError``; the ones describing bad input also
derive from ``ValueError`` so callers can keep catching that.
"""


class TspqError(Exception):
    """Base class for every error tspq raises deliberately."""


class InvalidInstanceError(TspqError, ValueError):
    """Bad city data, duplicate names, or instance size out of bounds."""


class MalformedTourError(TspqError, ValueError):
    """A tour is missing a city, repeats one, or has the wrong endpoints."""


class EncodingError(TspqError, ValueError):
    """Bitstring or feature vector does not match the model dimension."""


class InfeasibleConfigError(TspqError, ValueError):
    """The requested encoding cannot be simulated for this many cities."""


class ConfigError(TspqError, ValueError):
    """Invalid or unreadable solve configuration."""


class ReportError(TspqError, OSError):
    """Writing or reading result files failed.

    Parameters
    ----------
    message: str
        What went wrong
    path: str or Path
        The file or directory involved
    """
    def __init__(self, message, path):
        super().__init__(f"{message}: {path}")
        self.path = path

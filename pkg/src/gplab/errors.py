"""Exception types raised across the package."""


class GplabError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class QuadratureNonConvergent(GplabError):
    pass


class InvalidSchedule(GplabError, ValueError):
    exit_code = 2


class WindowTooLarge(GplabError):
    pass


class InsufficientPadding(GplabError, ValueError):
    pass


class WindowTooSmall(GplabError, ValueError):
    pass


class BisectionNonBracketed(GplabError):
    pass


class InsufficientHits(GplabError):
    exit_code = 4


class NotPSD(GplabError, ValueError):
    pass


class ConfigInvalid(GplabError, ValueError):
    """Bad configuration; ``field`` names the offending entry (dotted path)."""

    exit_code = 2

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message

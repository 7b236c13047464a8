"""Exception types shared across the package.

The CLI maps these onto process exit codes, so orchestration code should
raise the specific class rather than a bare ValueError where one applies.
"""


class ConfigError(ValueError):
    """A configuration value violates its constraint.

    Messages name the offending field, e.g. ``track.num_slots: ...``.
    """


class DegeneratePositionError(ValueError):
    """User placed exactly at the ground origin, where azimuth is undefined."""


class InvalidIndicatorError(ValueError):
    """Slot-selection vector has the wrong length or selection count."""


class SchemeInapplicableError(RuntimeError):
    """A benchmark scheme's integrality/divisibility precondition fails."""


class NumericError(ArithmeticError):
    """Non-finite values reached a numerical kernel."""


class SearchSpaceTooLargeError(RuntimeError):
    """Exhaustive enumeration refused because C(L, N) exceeds the cap."""

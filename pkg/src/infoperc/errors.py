"""Exception types raised across the package.

The CLI maps these onto exit codes, so each class carries the code it
should produce.
"""

from __future__ import annotations


class InfopercError(Exception):
    exit_code = 1


class ParameterError(InfopercError, ValueError):
    """Invalid or infeasible numeric parameters."""

    exit_code = 3


class ParseError(InfopercError, ValueError):
    """Malformed edge-list or configuration text."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigurationError(InfopercError, ValueError):
    exit_code = 2

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message)


class ShapeError(InfopercError, ValueError):
    exit_code = 2


class UnsupportedRuleError(InfopercError, ValueError):
    exit_code = 3


class FourierInfeasibleError(ParameterError):
    """The Fourier-derived rule cannot be built at this beta."""

    def __init__(self, k: int, r: int, detail: str = ""):
        self.k = k
        self.r = r
        msg = f"beta too large for Fourier rule at degree {r} (k={k})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ModeError(InfopercError, ValueError):
    """Operation applied to data built in an incompatible mode."""

    exit_code = 2


class OverflowLimitError(InfopercError, RuntimeError):
    """A lazily grown structure hit its cap; ``partial`` holds what was built."""

    exit_code = 4

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)


class HistoryOverflow(OverflowLimitError):
    pass


class ExplorationOverflow(OverflowLimitError):
    pass


class NoCoalescence(OverflowLimitError):
    pass


class GridTooShort(InfopercError, ValueError):
    exit_code = 2

    def __init__(self, first: float, last: float):
        self.first = first
        self.last = last
        super().__init__(
            f"grid too short: sum of squared magnetizations goes from {first:.6g} "
            f"to {last:.6g} without crossing 1"
        )


class SizeError(InfopercError, ValueError):
    exit_code = 2


class UndefinedMetricError(InfopercError, ValueError):
    exit_code = 2


class SampleSizeError(InfopercError, ValueError):
    exit_code = 2


class LayoutError(InfopercError, ValueError):
    exit_code = 2

"""Exception types raised by jumpgen."""

from __future__ import annotations


class JumpgenError(Exception):
    """Base class for all library errors."""


class GridMismatchError(JumpgenError, ValueError):
    """Two fields (or a field and a kernel) live on different grids."""


class KernelResolutionError(JumpgenError, ValueError):
    """The grid is too coarse or too small to represent a kernel."""


class MGFUnreliableError(JumpgenError, ValueError):
    """Grid quadrature of the moment generating function is not trustworthy."""


class TruncationCapError(JumpgenError, ValueError):
    """The Neumann series would need more terms than the configured cap."""


class NegativeValueError(JumpgenError, ValueError):
    """A quantity that must be nonnegative came out negative beyond roundoff."""


class FitWindowError(JumpgenError, ValueError):
    """A tail-fit window is infeasible for the supplied field."""


class ConvergenceError(JumpgenError, RuntimeError):
    """An iterative solver did not converge within its iteration cap."""

    def __init__(self, message: str, last_value: float | None = None):
        super().__init__(message)
        self.last_value = last_value


class SelfCheckError(JumpgenError, RuntimeError):
    """Two internal formulations of the same quantity disagree."""

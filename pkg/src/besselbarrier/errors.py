"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(ArithmeticError):
    """An iterative method, series or quadrature failed to converge."""

    def __init__(self, message: str, *, index: int | None = None, achieved: float | None = None):
        if index is not None:
            message = f"{message} (index {index})"
        if achieved is not None:
            message = f"{message} (achieved tolerance {achieved:.3g})"
        super().__init__(message)
        self.index = index
        self.achieved = achieved


class BudgetExhausted(RuntimeError):
    """A calibration or simulation ran out of its sample/time budget."""

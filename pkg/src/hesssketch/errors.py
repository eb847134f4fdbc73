"""Exception hierarchy shared by all modules."""


class HessSketchError(Exception):
    """Base class for package errors."""


class ContractError(HessSketchError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateError(HessSketchError, ArithmeticError):
    """The input matrix is numerically degenerate for the requested quantity.

    Raised for zero-norm rows of the factor (the diagonal variation
    parameters need strictly positive diagonals) and zero Frobenius norm.
    """


class SolverError(HessSketchError, RuntimeError):
    """A linear solve failed to reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FactorFormatError(HessSketchError, OSError):
    """A binary factor file has the wrong magic bytes or size."""


class ConfigError(HessSketchError, ValueError):
    """An experiment configuration failed validation."""

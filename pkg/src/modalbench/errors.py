"""Exception hierarchy shared across the workbench."""


class ModalbenchError(Exception):
    """Base class for all workbench errors."""


class InvalidArgumentError(ModalbenchError, ValueError):
    """Caller violated a documented precondition."""


class DegenerateMeshError(ModalbenchError):
    """Mesh contains a triangle with (near-)zero area."""


class IllConditionedSystemError(ModalbenchError):
    """Eigensystem does not look like a free 2D body (rigid-mode count != 3)."""


class SolverError(ModalbenchError):
    """Iterative eigensolver failed to converge.

    Carries the residual report in ``residuals`` when available.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class OutOfDomainError(ModalbenchError):
    """Query position lies outside every triangle of the mesh."""


class NumericError(ModalbenchError):
    """Non-finite value produced by a numeric pipeline.

    ``bin_index`` points at the first offending frequency bin when known.
    """

    def __init__(self, message, bin_index=None):
        super().__init__(message)
        self.bin_index = bin_index


class NumericOverflowError(NumericError):
    """Non-finite sample produced by recursive filtering."""


class FitAbortedError(ModalbenchError):
    """Numeric failure during fitting; best-so-far state is attached."""

    def __init__(self, message, params=None, history=None):
        super().__init__(message)
        self.params = params
        self.history = history

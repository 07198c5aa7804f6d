"""Typed errors raised across the package."""


class DimensionMismatchError(ValueError):
    """Operands have incompatible matrix dimensions."""


class DomainError(ValueError):
    """An input or intermediate value left the operation's domain."""


class PositivityError(DomainError):
    """A matrix required to be positive definite is not.

    Carries the offending eigenvalue so callers can report which
    direction left the cone.
    """

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class CommutationError(DomainError):
    """Parallel transport was asked for a non-commuting pair."""


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a trustworthy result."""


class OptimizerError(RuntimeError):
    """A manifold optimizer step could not stay on the manifold."""


class TrainingDivergenceError(RuntimeError):
    """Training produced a non-finite loss.

    ``epoch`` is the index at which divergence was detected.
    """

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch

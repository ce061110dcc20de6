"""Exception types shared across the package."""


class TensorTourError(Exception):
    """Base class for every error raised by this package."""


class ModelError(TensorTourError, ValueError):
    """Problem or cost data is malformed (shape mismatch, bad bounds, ...)."""


class InputError(TensorTourError, ValueError):
    """A runtime argument is out of range (bad node id, wrong route length)."""


class ConfigError(TensorTourError, ValueError):
    """Solver configuration is invalid for the given problem."""


class ContractionError(TensorTourError, ValueError):
    """Tensor contraction was asked to pair incompatible indexes."""


class GuardError(TensorTourError, RuntimeError):
    """A size guard refused an operation that would blow up combinatorially."""


class NoSurvivingStateError(TensorTourError, RuntimeError):
    """Every amplitude vanished: the subproblem is infeasible or tau overflowed.

    The solver catches this to drive its tau-adaptation / infeasibility
    classification; it escapes to the caller only for raw tensor-level use.
    """

    def __init__(self, message="no surviving state", iteration=None):
        super().__init__(message)
        self.iteration = iteration

"""Exception hierarchy shared by all barylab modules."""


class BaryLabError(Exception):
    """Base class for every error raised by barylab."""


class SizeError(BaryLabError, ValueError):
    """Matrix size outside the supported desk-scale range."""


class ConstructionError(BaryLabError, ValueError):
    """Invalid root-system family/rank combination."""


class PreconditionError(BaryLabError, ValueError):
    """An operation was called with inputs violating its stated precondition."""


class DegeneracyError(BaryLabError, ArithmeticError):
    """A matrix that must be SPD (or nonsingular) numerically is not."""


class ConditioningError(BaryLabError, ArithmeticError):
    """A group element is too ill-conditioned for a reliable decomposition."""


class DegenerateMeasureError(BaryLabError, ArithmeticError):
    """The barycenter functional has a (numerically) singular Hessian."""


class ConvergenceError(BaryLabError, RuntimeError):
    """The Newton solver failed to converge.

    The ``trace`` attribute holds ``(iteration, value, gradient_norm, step)``
    tuples for every iteration taken.
    """

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class CapabilityError(BaryLabError, ValueError):
    """Requested computation exceeds the exhaustive-mode limits."""


class InfeasibleFrameError(BaryLabError):
    """Hall matching found no frame; ``deficient`` carries the witness set."""

    def __init__(self, message, deficient=(), selection=None):
        super().__init__(message)
        self.deficient = tuple(deficient)
        self.selection = selection

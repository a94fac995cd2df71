"""Exception types raised across the package."""


class PHSplitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(PHSplitError):
    """Operands have incompatible shapes."""


class NotPSD(PHSplitError):
    """A matrix required to be symmetric positive semidefinite is not."""


class SingularCayley(PHSplitError):
    """The shifted matrix I + lambda*K could not be inverted."""


class SkewViolation(PHSplitError):
    """A matrix required to be skew-symmetric is not."""


class GridMismatch(PHSplitError):
    """Waveforms do not share the same sampling grid."""


class SingularStepMatrix(PHSplitError):
    """The implicit step matrix is singular for the chosen step size."""


class IrregularPencil(PHSplitError):
    """The matrix pencil s*E - A is (numerically) singular for all shifts."""


class NonInvertibleE(PHSplitError):
    """A per-block E is singular where the engine needs an ODE block."""


class InvalidConfig(PHSplitError):
    """Iteration or experiment configuration violates its invariants."""


class UnknownModel(PHSplitError):
    """Requested built-in model name does not exist."""


class InvalidParameter(PHSplitError):
    """A model parameter is missing, non-numeric, or out of range."""


class ModelFileError(PHSplitError):
    """A model file could not be parsed or fails schema checks."""

"""Exception hierarchy shared by all qdopo modules."""


class QdopoError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(QdopoError, ValueError):
    """A parameter is outside its allowed domain."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class LengthMismatchError(QdopoError, ValueError):
    pass


class NoFiniteKInstabilityError(QdopoError, ValueError):
    """Raised for non-negative signal detuning: the instability is at k = 0."""


class BranchAbsentError(QdopoError, ValueError):
    """The requested nonzero homogeneous solution does not exist."""


class ComplexBranchError(QdopoError, ValueError):
    pass


class DomainError(QdopoError, ValueError):
    pass


class GuardViolationError(QdopoError):
    """The diffusion-positivity condition |alpha0| < 2 is violated."""


class NonFiniteFieldError(QdopoError, FloatingPointError):
    pass


class UnknownKindError(QdopoError, ValueError):
    pass


class UnphysicalMomentsError(QdopoError, ValueError):
    pass


class UndefinedForVacuumError(QdopoError, ValueError):
    pass


class InsufficientSamplesError(QdopoError, ValueError):
    pass


class ConfigParseError(QdopoError, ValueError):
    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class UnknownPresetError(QdopoError, KeyError):
    pass


class AllTrajectoriesRejectedError(QdopoError, RuntimeError):
    pass


class CheckpointFormatError(QdopoError, ValueError):
    pass

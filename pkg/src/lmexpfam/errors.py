"""Exception hierarchy shared by the optimizer and the model plugins."""


class LMExpFamError(Exception):
    """Base class for all package errors."""


class DomainError(LMExpFamError, ValueError):
    """Parameters lie outside the natural parameter space."""


class DegenerateCurvature(LMExpFamError, ValueError):
    """A Hessian diagonal entry is not strictly negative."""


class LinearAlgebraFailure(LMExpFamError, ArithmeticError):
    """A factorization or linear solve failed."""


class DegenerateGain(LMExpFamError, ArithmeticError):
    """Both candidate denominators of the gain ratio vanished."""


class InvalidMatrix(LMExpFamError, ValueError):
    """A matrix argument violates its definiteness contract."""


class InsufficientData(LMExpFamError, ValueError):
    pass


class NumericalError(LMExpFamError, ArithmeticError):
    pass


class ImproperDensity(DomainError):
    """The log-partition function is not finite at the given parameters."""


class InitFailure(LMExpFamError, ValueError):
    pass


class DataError(LMExpFamError, ValueError):
    """Malformed or inadmissible input data.

    ``row`` and ``column`` are 1-based positions in the source file when
    known.
    """

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(LMExpFamError, ValueError):
    pass

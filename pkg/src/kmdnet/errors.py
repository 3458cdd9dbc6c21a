"""Exception and warning types raised across the package."""


class KMDError(Exception):
    """Base class for all package errors."""


class DimensionError(KMDError, ValueError):
    pass


class OutOfDomain(KMDError, ValueError):
    """A point lies outside the approximation box."""


class SingularSystem(KMDError, ArithmeticError):
    pass


class EigenFailure(KMDError, ArithmeticError):
    pass


class StepSizeUnderflow(KMDError, ArithmeticError):
    """The adaptive integrator could not make progress."""


class InfeasibleConstraints(KMDError, ArithmeticError):
    pass


class DegenerateImage(KMDError, ArithmeticError):
    """Eigenfunction images of the grid do not span the target space."""


class OutOfBox(KMDError, ValueError):
    pass


class NonPSD(KMDError, ValueError):
    pass


class NotInvertible(KMDError, ArithmeticError):
    pass


class SeriesRangeError(KMDError, ValueError):
    """Initial condition outside the range where a truncated series is trusted."""


class GraphError(KMDError, ValueError):
    pass


class ConfigError(KMDError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class IllConditioned(UserWarning):
    pass

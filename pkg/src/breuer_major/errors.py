"""Exception hierarchy shared by all modules."""


class BreuerMajorError(Exception):
    """Base class for every error raised by this package."""


class UnsupportedDegreeError(BreuerMajorError, ValueError):
    pass


class DimensionMismatchError(BreuerMajorError, ValueError):
    pass


class QuadratureError(BreuerMajorError, ArithmeticError):
    """A functional or integrand produced a non-finite value at a quadrature node."""


class DegenerateFunctionalError(BreuerMajorError, ValueError):
    pass


class AbsentLevelError(BreuerMajorError, KeyError):
    pass


class ModelError(BreuerMajorError, ValueError):
    """Invalid covariance or spectral model (non-finite, non-PSD, unnormalized)."""


class NotWhitenableError(ModelError):
    pass


class UnsupportedDimensionError(BreuerMajorError, ValueError):
    pass


class BudgetExceededError(BreuerMajorError, RuntimeError):
    pass


class C1FailureError(BreuerMajorError, ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class GridError(BreuerMajorError, ValueError):
    pass


class InsufficientReplicatesError(BreuerMajorError, ValueError):
    pass


class IntegrabilityError(BreuerMajorError, ValueError):
    """Requested moment exceeds the integrability declared for the functional."""


class ConfigError(BreuerMajorError, ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path

"""Exception hierarchy shared by all modules."""


class FinslerError(Exception):
    """Base class for every error raised by finslerlab."""


class JetDomainError(FinslerError, ValueError):
    """A jet primitive was evaluated outside its domain."""


class DegenerateDirectionError(FinslerError, ValueError):
    pass


class ConvexityViolationError(FinslerError):
    def __init__(self, msg: str, x=None, y=None):
        super().__init__(msg)
        self.x = x
        self.y = y


class InversionFailure(FinslerError):
    def __init__(self, msg: str, residual: float = float("nan")):
        super().__init__(msg)
        self.residual = residual


class ChartBoundaryError(FinslerError):
    pass


class ParameterError(FinslerError, ValueError):
    pass


class ConfigurationError(FinslerError):
    """A verifier was called without the certificate it needs."""


class PastCutError(FinslerError):
    pass


class HorizonError(FinslerError):
    pass


class StepSizeError(FinslerError):
    pass


class ResolutionError(FinslerError):
    pass


class DomainError(FinslerError, ValueError):
    """Argument outside the domain of a comparison function or bound."""


class PrecisionWarning(UserWarning):
    """Quadrature refinement disagreed with the base result."""

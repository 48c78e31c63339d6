"""Exception hierarchy shared by every module."""


class GDConjError(Exception):
    """Base class for all library errors."""


class IndexOutOfWindow(GDConjError, IndexError):
    pass


class SingularCoefficient(GDConjError):
    pass


class NumericalFailure(GDConjError):
    """Raised when an iterative or algebraic step cannot be completed."""


class NoConvergence(NumericalFailure):
    pass


class IterationCapExceeded(NoConvergence):
    pass


class BackwardNotContractive(NumericalFailure):
    pass


class NotAProjection(GDConjError):
    pass


class CertificateRejected(GDConjError):
    pass


class TailBudgetExceeded(GDConjError):
    pass


class NotContractive(GDConjError):
    pass


class WindowTooNarrow(GDConjError):
    pass


class NotApplicable(GDConjError):
    pass


class UnknownFamily(GDConjError, KeyError):
    pass


class InvalidParams(GDConjError, ValueError):
    pass


class ConfigError(GDConjError):
    pass

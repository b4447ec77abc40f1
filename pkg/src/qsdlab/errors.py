"""Exceptions raised by the numerical pipeline."""


class QsdlabError(Exception):
    """Base class for all qsdlab errors."""


class NoCrossing(QsdlabError):
    """The birth/death ratio never falls below 1 on the scanned range."""


class TruncationFailure(QsdlabError):
    """The coefficient table would exceed the configured hard cap."""


class RhoOutOfRange(QsdlabError):
    """|rho| violates the contraction precondition of the perturbation series."""


class NoSignChange(QsdlabError):
    """The matching determinant does not change sign on the expanded bracket."""


class NonPositiveCoefficient(QsdlabError):
    """solve_recursion requires strictly positive alpha/beta coefficients."""


class ConvergenceFailure(QsdlabError):
    """An iterative solver exhausted its iteration budget."""


class IndexOutOfRange(QsdlabError, IndexError):
    """A state index lies outside the table range."""


class LengthMismatch(QsdlabError):
    """Probability vectors of different lengths with padding disabled."""


class TimeTooLarge(QsdlabError):
    """The uniformization step count for the requested time exceeds the cap."""


class InsufficientSurvivors(QsdlabError):
    """Too few surviving replicas at the requested checkpoint."""

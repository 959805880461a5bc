"""Exception types raised by the solvers and estimators."""


class BayesMaskError(Exception):
    """Base class for all package errors."""


class ModelDomainError(BayesMaskError, ValueError):
    """A parameter sits outside the domain where the objective is defined."""


class SingularSystemError(BayesMaskError, ArithmeticError):
    """A normal-equation style linear system is rank deficient."""


class DegenerateNoiseError(BayesMaskError, ArithmeticError):
    """The closed-form noise variance is non-positive or not finite."""


class EmptyModelError(BayesMaskError):
    """Every feature was pruned from the model."""


class ConvergenceError(BayesMaskError):
    """An iterative solver hit its iteration cap."""

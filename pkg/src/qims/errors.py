"""Exception types shared across the package."""


class QimsError(Exception):
    """Base class for all package errors."""


class ParameterError(QimsError, ValueError):
    """Model parameters are inconsistent or out of range."""


class StructureError(QimsError, ValueError):
    """An operator expression references indices outside the model."""


class SingularityError(QimsError, ValueError):
    """Evaluation requested at a pole of the coefficient functions."""


class SubspaceError(QimsError):
    """A restriction produced a coefficient outside the target space."""

    def __init__(self, message, offending_index=None, coefficient=None):
        super().__init__(message)
        self.offending_index = offending_index
        self.coefficient = coefficient


class ChamberError(QimsError, ValueError):
    """A point lies outside the integration chamber."""


class ConvergenceError(QimsError, RuntimeError):
    """A quadrature or series evaluation failed to stabilize."""


class PropagationError(QimsError, RuntimeError):
    """ODE propagation failed; carries the arclength location of failure."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location

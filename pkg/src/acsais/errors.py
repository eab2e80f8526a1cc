"""Exception hierarchy shared by all modules."""


class AcsaisError(Exception):
    """Base class for all package errors."""


class InputValidationError(AcsaisError, ValueError):
    """Malformed graph, partition, parameter or file content."""


class PreconditionError(AcsaisError):
    """An operation was called on an input outside its domain."""


class NotMConnectedError(PreconditionError):
    """The two-layer network fails the M-connectivity test."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConvergenceError(AcsaisError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, iterations=None, residual=None, last_iterate=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.last_iterate = last_iterate


class PositiveConeError(AcsaisError):
    """An iterate that should stay strictly positive lost positivity."""


class BudgetExceededError(AcsaisError):
    """Exhaustive subset enumeration was requested beyond its size budget."""


class ZeroDenominatorError(AcsaisError):
    """A row sum used as a denominator vanished."""

    def __init__(self, message, node):
        super().__init__(message)
        self.node = node


class IntegrationError(AcsaisError):
    """The ODE integrator left the probability simplex."""


class BracketError(AcsaisError):
    """No sign change was found in the bisection bracket."""

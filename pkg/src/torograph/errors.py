"""Exception hierarchy shared by all torograph modules."""


class TorographError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 4


class InvalidArgumentError(TorographError, ValueError):
    exit_code = 2


class UndefinedDirectionError(TorographError, ValueError):
    """Zero mean resultant length: the mean direction does not exist."""


class SingularityError(TorographError, ValueError):
    """Stereographic projection evaluated at the cut point theta = pi."""


class AcyclicityError(InvalidArgumentError):
    """A parent does not precede its child in the node ordering."""


class NumericalError(TorographError, ArithmeticError):
    """Singular or ill-conditioned matrix encountered."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class ConvergenceError(TorographError, RuntimeError):
    """Iterative procedure hit its iteration cap.

    The best iterate found so far is kept on ``best`` so that callers
    can still inspect or use it.
    """

    exit_code = 5

    def __init__(self, message, best=None, diagnostic=None):
        super().__init__(message)
        self.best = best
        self.diagnostic = diagnostic


class ParseError(TorographError, ValueError):
    exit_code = 3

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column

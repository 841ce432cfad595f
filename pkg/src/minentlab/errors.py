"""Exception hierarchy shared by all modules."""


class MinentError(Exception):
    """Base class for library errors."""


class InvalidParameter(MinentError, ValueError):
    pass


class PreconditionFailure(MinentError, ValueError):
    pass


class OutOfRange(MinentError, ValueError):
    pass


class NoSolution(MinentError, ValueError):
    """Raised when a root or target value is unreachable.

    ``achievable`` carries the reachable range when it is known.
    """

    def __init__(self, msg, achievable=None):
        super().__init__(msg)
        self.achievable = achievable


class InvalidWord(MinentError, ValueError):
    pass


class Degenerate(MinentError, ArithmeticError):
    pass


class Inconclusive(MinentError, RuntimeError):
    pass


class NotConverged(MinentError, RuntimeError):
    """Iteration budget exhausted; ``result`` holds the last iterate."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result

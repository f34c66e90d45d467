"""Exception hierarchy shared by every module of the package."""


class IsaacsLabError(Exception):
    """Base class for all package errors."""


class ExpressionSyntaxError(IsaacsLabError, ValueError):
    """Malformed expression text; ``offset`` is the UTF-8 byte offset."""

    def __init__(self, message, src, offset):
        self.src = src
        self.offset = offset
        super().__init__(f"{message} at byte {offset} in {src!r}")


class UnknownIdentifierError(ExpressionSyntaxError):
    pass


class ArityError(ExpressionSyntaxError):
    pass


class EvaluationError(IsaacsLabError, ArithmeticError):
    """Unbound variable or non-finite intermediate result.

    ``point`` holds the offending bindings when they are known.
    """

    def __init__(self, message, point=None):
        self.point = point
        if point:
            message = f"{message} at {point}"
        super().__init__(message)


class ConfigError(IsaacsLabError, ValueError):
    """Missing field, dimension mismatch or undeclared variable in a model config."""


class GridError(IsaacsLabError, ValueError):
    """Degenerate, misaligned or out-of-domain grid usage."""


class CFLError(IsaacsLabError):
    """Explicit step violates the monotonicity (CFL) bound."""


class NonFiniteValueError(IsaacsLabError, FloatingPointError):
    def __init__(self, message, time_level=None, step=None):
        self.time_level = time_level
        self.step = step
        super().__init__(message)


class LatticeError(IsaacsLabError, ValueError):
    """Transition probabilities outside [0, 1]."""


class StageError(IsaacsLabError):
    """A pipeline stage failed; ``cause`` is the original error."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause

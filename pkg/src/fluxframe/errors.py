"""Exception hierarchy shared by all modules."""


class FluxFrameError(Exception):
    """Base class."""


class ExprSyntaxError(FluxFrameError, ValueError):
    """Malformed expression text; carries the offending position."""

    def __init__(self, message: str, position: int, expected: str):
        super().__init__(f"{message} at position {position} (expected {expected})")
        self.position = position
        self.expected = expected


class UnknownIdentifier(FluxFrameError, ValueError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier {name!r} at position {position}")
        self.name = name
        self.position = position


class DomainError(FluxFrameError, ArithmeticError):
    """Evaluation outside the natural domain of an expression."""


class DegenerateFrame(DomainError):
    pass


class UnsupportedCase(FluxFrameError):
    pass


class NotApplicable(FluxFrameError):
    pass


class DegenerateCoefficient(FluxFrameError):
    pass


class NotInvolutive(NotApplicable):
    pass


class NotRich(NotApplicable):
    pass


class ConditionFailed(FluxFrameError):
    pass


class NonGeneric(FluxFrameError):
    pass


class RankUnstable(FluxFrameError):
    pass


class StepFailure(FluxFrameError):
    pass


class LoopNotClosed(FluxFrameError):
    pass


class NotIntegrable(FluxFrameError):
    pass


class Inconsistent(FluxFrameError):
    pass


class ConfigError(FluxFrameError, ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column

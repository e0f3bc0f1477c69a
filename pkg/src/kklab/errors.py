"""Exception hierarchy. Each class carries the CLI exit code of its failure class."""


class KKError(Exception):
    exit_code = 10


class ConfigError(KKError):
    """Invalid scenario, missing section, or violated configuration invariant."""

    exit_code = 2


class ExpressionError(ConfigError):
    """Syntax error or unknown identifier in a field expression."""

    def __init__(self, message, offset=None, expected=()):
        self.offset = offset
        self.expected = tuple(expected)
        if offset is not None:
            message = f"{message} at offset {offset}"
            if self.expected:
                message += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(message)


class DomainError(KKError):
    """A quantity left its mathematical domain (a <= 0, negative square-root argument)."""

    exit_code = 3


class FrameError(DomainError):
    """Conformal factor squared is non-positive where a rescaled frame was requested."""


class SingularityError(KKError):
    """Degenerate metric."""

    exit_code = 4


class NormalizationError(KKError):
    """A direction cannot be rescaled to the requested norm."""

    exit_code = 5


class IntegrationError(KKError):
    """Step-size underflow or constraint violation; ``partial`` holds what was computed."""

    exit_code = 6

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NonConvergenceError(KKError):
    exit_code = 7

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class ComparisonError(KKError):
    exit_code = 8

"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to.
"""


class AmdLabError(Exception):
    exit_code = 1


class ConfigError(AmdLabError, ValueError):
    """Invalid configuration, unknown names, violated preconditions."""

    exit_code = 2

    def __init__(self, message, problems=None):
        self.problems = list(problems) if problems else [message]
        super().__init__(message)


class RangeError(ConfigError):
    """A timestep or coefficient outside its admissible interval."""


class UsageError(AmdLabError, RuntimeError):
    """API misuse, e.g. replaying a consumed tape or mismatched role tags."""

    exit_code = 2


class NumericError(AmdLabError, ArithmeticError):
    """Non-finite values produced during a forward pass or update."""

    exit_code = 3

    def __init__(self, message, iteration=None, layer=None):
        self.iteration = iteration
        self.layer = layer
        super().__init__(message)


class SinkError(AmdLabError, OSError):
    exit_code = 4

    def __init__(self, message, last_iteration=None):
        self.last_iteration = last_iteration
        super().__init__(message)

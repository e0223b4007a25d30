"""Exception hierarchy shared by all solver modules."""


class SpdfpError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(SpdfpError, ValueError):
    """An argument is outside its admissible range."""


class ShapeError(SpdfpError, ValueError):
    """Array dimensions do not chain."""


class ConfigurationError(SpdfpError, ValueError):
    """A solver or sampler configuration violates a convergence condition."""


class ModeError(ConfigurationError):
    """The requested algorithm cannot handle the configured problem."""


class ProtocolError(SpdfpError, RuntimeError):
    """An agent tried to read a neighbor value that was never published."""


class DivergenceError(SpdfpError, RuntimeError):
    """Iterates blew up; almost always a step-size bound bug."""


class ConvergenceError(SpdfpError, RuntimeError):
    """An inner iterative routine ran out of iterations.

    The last available estimate is kept on ``estimate``.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ParseError(SpdfpError, ValueError):
    """Malformed input file. ``line`` and ``column`` are 1-based."""

    def __init__(self, message, line, column=None):
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.column = column

"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration (bad dimensions, probabilities, mode mixes)."""


class StreamFormatError(ValueError):
    """Malformed stream file; carries the offending 1-based line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class SingularSystemError(ArithmeticError):
    """Normal equations are singular; typically raised when lambda == 0."""


class UnsupportedModeError(RuntimeError):
    """Operation invoked outside the mode it is defined for."""


class NonconvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap before meeting tolerance."""

    def __init__(self, message, last_objective=None, iterations=None):
        super().__init__(message)
        self.last_objective = last_objective
        self.iterations = iterations

"""Exception hierarchy.

Every error carries a ``category`` used by the CLI to build its
machine-readable failure line.
"""


class MacapError(Exception):
    category = "error"


class InvalidArgument(MacapError, ValueError):
    category = "invalid-argument"


class NumericError(MacapError, ArithmeticError):
    category = "numeric"


class ConvergenceError(MacapError, RuntimeError):
    category = "convergence"

    def __init__(self, message, loop=None, history=None):
        super().__init__(message)
        self.loop = loop
        self.history = list(history) if history is not None else []


class EstimationError(MacapError):
    category = "estimation"


class ParseError(MacapError, ValueError):
    category = "parse"

    def __init__(self, message, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.key = key
        self.line = line

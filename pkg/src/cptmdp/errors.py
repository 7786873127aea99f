"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Inputs violate a precondition (bad model, policy/state mismatch, ...)."""


class DomainError(ValueError):
    """A function was evaluated outside its mathematical domain."""


class NumericalFailure(ArithmeticError):
    """An iterative solver produced a non-finite quantity."""


class ModelParseError(ValueError):
    """A model document could not be parsed.

    ``line`` and ``column`` are 1-based when known; ``field`` names the JSON
    path that failed to convert.
    """

    def __init__(self, message, *, line=None, column=None, field=None):
        self.line = line
        self.column = column
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if field is not None:
            where.append(f"field {field}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)

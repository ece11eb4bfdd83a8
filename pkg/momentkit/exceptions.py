"""
Exceptions raised by momentkit.

They derive from the builtin families (ValueError for bad input,
LookupError for dangling references, RuntimeError for failures while
running), so callers can catch either the specific class or the builtin.
"""


class RangeError(ValueError):
    """A value lies outside its allowed range."""

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class ShapeError(ValueError):
    """Array shapes or sequence lengths do not agree."""


class InputError(ValueError):
    """Input data is invalid or inconsistent."""


class ParseError(ValueError):
    """Text could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line


class DegenerateInputError(ValueError):
    """Input has no variance or no magnitude where some is required."""


class TemplateError(ValueError):
    """A prompt template has unknown or unbound placeholders."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class CellReferenceError(LookupError):
    """Clue records refer to matrix cells that do not exist or are absent."""

    def __init__(self, message, records=()):
        super().__init__(message)
        self.records = list(records)


class TrainingError(RuntimeError):
    """Gradient descent produced a non-finite loss."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ClientError(RuntimeError):
    """An LLM client call failed after all retries."""

    def __init__(self, message, retries=0):
        super().__init__(message)
        self.retries = retries

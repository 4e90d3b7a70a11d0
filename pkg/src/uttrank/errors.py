"""Toolkit exception types.

Validation failures raise ValidationError; malformed input files raise
CorpusFormatError with the offending line number. The CLI maps any
UttrankError to exit code 1 and argparse usage problems to exit code 2.
"""


class UttrankError(Exception):
    """Base class for all toolkit errors."""


class CorpusFormatError(UttrankError):
    """A corpus file line could not be parsed."""

    def __init__(self, path: str, line_number: int, message: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class ValidationError(UttrankError):
    """An input violated a documented invariant."""

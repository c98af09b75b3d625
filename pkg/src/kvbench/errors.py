"""Shared exception types with their CLI exit-code mapping."""


class KvbenchError(Exception):
    """Base class for benchmark errors (runtime failures, exit code 4)."""

    exit_code = 4


class ParseError(KvbenchError):
    """Malformed input file; names the offending line when known."""

    exit_code = 3

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(KvbenchError):
    """Input violates a documented invariant or precondition."""

    exit_code = 3

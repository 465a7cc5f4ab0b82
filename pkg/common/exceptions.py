"""
Error hierarchy shared by every app.

Each error carries the process exit code that management commands use when
the error reaches them.
"""


class FokasError(Exception):
    exit_code = 3

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def __str__(self) -> str:
        if not self.details:
            return self.message
        extra = ", ".join(f"{k}={v}" for k, v in self.details.items())
        return f"{self.message} ({extra})"


class InvariantFailure(FokasError):
    """A validation suite measured a property outside its tolerance."""

    exit_code = 1


class InputError(FokasError):
    """Bad files, bad parameters, or a request outside an operation's domain."""

    exit_code = 2


class NumericalError(FokasError):
    """Integrator, solver or iteration failure."""

    exit_code = 3


class ParseError(InputError):
    def __init__(self, path, line_number: int, message: str):
        super().__init__(f"{path}:{line_number}: {message}", path=str(path), line=line_number)
        self.path = path
        self.line_number = line_number


class SingularJumpError(NumericalError):
    def __init__(self, culprit: str, value: complex):
        super().__init__(f"Singular jump: |{culprit}| below threshold", culprit=culprit, modulus=abs(value))
        self.culprit = culprit


class StabilityError(NumericalError):
    def __init__(self, message: str, suggested_hy: float):
        super().__init__(message, suggested_hy=suggested_hy)
        self.suggested_hy = suggested_hy

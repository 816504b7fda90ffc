"""Error taxonomy shared by every PGRU module.

Each error keeps a ``context`` dict (fold, step, line, date, ...) that is rendered into
its message, so a stage can attach where it failed and re-raise the same class.
"""

from typing import Any, Dict, Optional


class PgruError(Exception):
    """Base class for all forecaster errors."""

    exit_code = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context)

    def with_context(self, **context: Any) -> "PgruError":
        """Attach more context (first value wins) and return self for re-raising."""
        for key, value in context.items():
            self.context.setdefault(key, value)
        return self

    def __reduce__(self):
        # Errors cross joblib worker boundaries; keep the context when pickled.
        return _rebuild, (type(self), self.message, self.context)

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} [{details}]"


class ValidationError(PgruError):
    exit_code = 3


class SchemaError(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class AlignmentError(ValidationError):
    pass


class ShapeError(PgruError):
    exit_code = 4


class WindowError(ShapeError):
    pass


class NumericError(PgruError):
    exit_code = 5


class DivergenceError(NumericError):
    pass


class DegenerateColumnError(NumericError):
    pass


class DomainError(PgruError):
    exit_code = 6


class ContractError(PgruError):
    exit_code = 1


def _rebuild(cls, message: str, context: Dict[str, Any]) -> PgruError:
    return cls(message, **context)


def exit_code_for(exc: Optional[BaseException]) -> int:
    """Map an exception to the CLI exit status."""
    if isinstance(exc, PgruError):
        return exc.exit_code
    return 1

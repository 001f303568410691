"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 2, data validation
problems exit 3 and numerical failures exit 4.
"""

from __future__ import annotations


class HetkitError(Exception):
    """Base class for every error raised deliberately by hetkit."""

    exit_code = 1


class UsageError(HetkitError):
    exit_code = 2


class OrderingError(UsageError):
    """A pipeline stage was invoked before the stage it depends on."""


class VersionError(UsageError):
    pass


class ValidationError(HetkitError, ValueError):
    exit_code = 3


class ParseError(ValidationError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class SchemaError(ValidationError):
    pass


class ShapeError(HetkitError, ValueError):
    exit_code = 2


class DomainError(HetkitError, ValueError):
    exit_code = 3


class NumericalError(HetkitError, ArithmeticError):
    exit_code = 4


class InsufficientDataError(NumericalError):
    pass


class TrainingDivergedError(NumericalError):
    def __init__(self, epoch: int, loss: float, what: str = "training"):
        super().__init__(f"{what} diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class NoViableArchitectureError(NumericalError):
    pass

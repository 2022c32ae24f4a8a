"""
Exception hierarchy for the prototype selection toolkit.
Each class carries the process exit status the CLI reports for it.
"""
from typing import Optional


class RepsError(Exception):
    """Root of every error raised by the toolkit."""
    exit_code = 2


# ------------------------------------------------------------------
# Usage errors (exit 1): bad flags, bad parameters
# ------------------------------------------------------------------
class UsageError(RepsError):
    exit_code = 1


class InvalidConfig(UsageError):
    pass


class InvalidFoldCount(UsageError):
    pass


class InvalidK(UsageError):
    pass


class MetricMismatch(UsageError):
    pass


# ------------------------------------------------------------------
# Data errors (exit 2): unreadable or unusable input
# ------------------------------------------------------------------
class DataError(RepsError):
    exit_code = 2


class IoError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateData(DataError):
    pass


class AsymmetryError(DataError):
    pass


class NegativeDistance(DataError):
    pass


class NonzeroDiagonal(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptySeries(DataError):
    pass


class MatchInfeasible(DataError):
    pass


class EmptyInput(DataError):
    pass


class SingleClass(DataError):
    pass


class EmptyPrototypeSet(DataError):
    pass


class UndefinedLOR(DataError):
    pass


class DatasetMismatch(DataError):
    pass


# ------------------------------------------------------------------
# Non-convergence (exit 3), only raised when the caller asks for it
# ------------------------------------------------------------------
class NotConverged(RepsError):
    exit_code = 3

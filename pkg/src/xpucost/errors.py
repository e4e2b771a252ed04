"""Exception hierarchy shared across the package.

Everything user-facing derives from :class:`XpuCostError` so the CLI can map
"your input is bad" errors to one exit code and genuine bugs to another.
"""

from __future__ import annotations


class XpuCostError(Exception):
    """Base class for all errors raised by this package."""


# --- IR ---------------------------------------------------------------


class IrError(XpuCostError):
    """Base class for errors about IR text or structure."""


class IrSyntaxError(IrError):
    def __init__(self, message: str, line: int, col: int, expected: str | None = None):
        loc = f"line {line}, col {col}"
        if expected is not None:
            message = f"{message} (expected {expected})"
        super().__init__(f"{loc}: {message}")
        self.line = line
        self.col = col
        self.expected = expected


class UnknownOpcodeError(IrError):
    pass


class ArityMismatchError(IrError):
    pass


class ShapeRuleError(IrError):
    pass


class SsaError(IrError):
    pass


class InvalidFunctionError(IrError):
    """Raised when an operation requires a valid function but validation fails."""


# --- tokenizer ---------------------------------------------------------


class EmptyCorpusError(XpuCostError):
    pass


# --- dataset -----------------------------------------------------------


class ConfigError(XpuCostError):
    pass


class CsvFormatError(XpuCostError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = ""
        if row is not None:
            where = f"row {row}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.row = row
        self.column = column


class ValidationError(XpuCostError):
    pass


# --- nn engine ---------------------------------------------------------


class IdOutOfRangeError(XpuCostError):
    pass


class SequenceTooShortError(XpuCostError):
    pass


class ShapeMismatchError(XpuCostError):
    pass


# --- models ------------------------------------------------------------


class ModeMismatchError(XpuCostError):
    pass


class LengthMismatchError(XpuCostError):
    pass


# --- training ----------------------------------------------------------


class MixedTargetsError(XpuCostError):
    pass


class EmptyDatasetError(XpuCostError):
    pass


# --- checkpoints -------------------------------------------------------


class CheckpointError(XpuCostError):
    pass

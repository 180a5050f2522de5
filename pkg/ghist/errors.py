"""
Error types raised by the ghist library.
All derive from ValueError so existing `except ValueError` handlers keep working.
"""
from typing import Any, Dict, Optional


class GhistError(ValueError):
    """Base class; carries a machine-readable form for the CLI."""

    def to_dict(self) -> Dict[str, Any]:
        return {"type": type(self).__name__, "message": str(self)}


class RejectedInputError(GhistError):
    """Input data unusable as given (empty, NaN, infinite)."""


class ParseError(RejectedInputError):
    """CSV ingestion failure. `row` is 1-based with the header as row 1."""

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row

    def to_dict(self) -> Dict[str, Any]:
        out = super().to_dict()
        if self.row is not None:
            out["row"] = self.row
        return out


class DomainError(GhistError):
    """An operation's precondition does not hold."""


class DegenerateScaleError(DomainError):
    """Zero spread: standardization or binning has no scale to work with."""


class ExponentialGuardError(DomainError):
    """Exhaustive enumeration refused above its size cap."""

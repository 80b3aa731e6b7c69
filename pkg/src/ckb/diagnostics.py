"""Source-located diagnostics.

Diagnostic codes fall into three families:

* ``E001``-``E099`` — parser/loader errors (see ckb.lang.parser)
* ``C0xx`` / ``W1xx`` — lint findings (see ckb.checks for the catalog)
* ``I101`` — informational notes attached by qualitative synthesis
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

SEVERITY_ERROR = "error"
SEVERITY_WARNING = "warning"
SEVERITY_INFO = "info"

_SEVERITY_RANK = {SEVERITY_ERROR: 0, SEVERITY_WARNING: 1, SEVERITY_INFO: 2}


@dataclass(frozen=True)
class SourceSpan:
    """Half-open region of a source file, 1-based lines and columns."""

    file: str
    line_start: int
    col_start: int
    line_end: int
    col_end: int

    def __post_init__(self):
        if (self.line_start, self.col_start) > (self.line_end, self.col_end):
            raise ValueError("span start must not follow its end")

    def __str__(self):
        return f"{self.file}:{self.line_start}:{self.col_start}"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: str
    message: str
    span: Optional[SourceSpan] = None
    related: tuple = ()  # (message, Optional[SourceSpan]) pairs

    def __post_init__(self):
        if self.severity not in _SEVERITY_RANK:
            raise ValueError(f"unknown severity {self.severity!r}")
        object.__setattr__(self, "related", tuple(self.related))

    def sort_key(self):
        span = self.span
        where = (span.file, span.line_start, span.col_start) if span else ("", 0, 0)
        return (_SEVERITY_RANK[self.severity], self.code, where, self.message)

    def render(self) -> str:
        head = f"{self.span}: " if self.span else ""
        return f"{head}{self.severity}: [{self.code}] {self.message}"

    def to_dict(self) -> dict:
        span = None
        if self.span is not None:
            span = {
                "file": self.span.file,
                "line_start": self.span.line_start,
                "col_start": self.span.col_start,
                "line_end": self.span.line_end,
                "col_end": self.span.col_end,
            }
        return {
            "code": self.code,
            "severity": self.severity,
            "message": self.message,
            "span": span,
            "related": [
                {"message": m, "span": s.__dict__ if s else None} for m, s in self.related
            ],
        }


def sort_diagnostics(diagnostics) -> tuple:
    """Deterministic report order: severity, code, span, message."""
    return tuple(sorted(diagnostics, key=Diagnostic.sort_key))

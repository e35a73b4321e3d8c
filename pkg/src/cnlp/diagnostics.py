"""Diagnostic records, the error management file, and text rendering."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Sequence

from .model import Span

if TYPE_CHECKING:
    from .semantics import LintReport

__all__ = [
    "CODES",
    "SOURCE_PATH",
    "Diagnostic",
    "diag",
    "sort_diagnostics",
    "diagnostics_to_obj",
    "diagnostics_from_obj",
    "error_file_text",
    "write_error_file",
    "read_error_file",
    "render_text",
]

# Syntactic (E00x) and semantic (E10x) taxonomy.
CODES: dict[str, str] = {
    "E001": "unknown-section-keyword",
    "E002": "missing-end-marker",
    "E003": "malformed-command",
    "E004": "malformed-type-expression",
    "E005": "duplicate-section",
    "E101": "undeclared-variable-reference",
    "E102": "variable-redeclaration",
    "E103": "unknown-type-name",
    "E104": "unknown-api",
    "E105": "missing-required-parameter",
    "E106": "unknown-parameter",
    "E107": "parameter-type-mismatch",
    "E108": "enum-value-out-of-range",
    "E109": "response-type-conflict",
}

SOURCE_PATH = "<source>"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    path: str
    span: Span
    message: str
    reason: str = ""
    severity: str = "error"
    related: tuple[tuple[str, str], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.code not in CODES:
            raise ValueError(f"unknown diagnostic code {self.code!r}")
        if not self.message:
            raise ValueError("diagnostic message must be nonempty")

    def at(self, path: str, span: Span | None = None) -> Diagnostic:
        return replace(self, path=path, span=span or self.span)

    def to_obj(self) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "code": self.code,
            "severity": self.severity,
            "path": self.path,
            "line": self.span.line,
            "col": self.span.col,
            "end_line": self.span.end_line,
            "end_col": self.span.end_col,
            "message": self.message,
            "reason": self.reason,
        }
        if self.related:
            obj["related"] = [{"path": p, "note": n} for p, n in self.related]
        return obj

    @classmethod
    def from_obj(cls, obj: dict[str, Any]) -> Diagnostic:
        line, col = obj["line"], obj["col"]
        span = Span(line, col, obj.get("end_line", line), obj.get("end_col", col))
        related = tuple((r["path"], r["note"]) for r in obj.get("related", ()))
        return cls(
            obj["code"], obj["path"], span, obj["message"], obj.get("reason", ""),
            obj.get("severity", "error"), related,
        )


def diag(code: str, path: str, span: Span, message: str | None = None, reason: str = "") -> Diagnostic:
    """Build a diagnostic; the message defaults to the code's taxonomy name."""
    return Diagnostic(code, path, span, message or CODES[code].replace("-", " "), reason)


def sort_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return sorted(diags, key=lambda d: (d.span.line, d.span.col, d.code))


def diagnostics_to_obj(diags: Sequence[Diagnostic]) -> dict[str, Any]:
    return {"diagnostics": [d.to_obj() for d in diags]}


def diagnostics_from_obj(obj: dict[str, Any]) -> list[Diagnostic]:
    return [Diagnostic.from_obj(d) for d in obj["diagnostics"]]


def error_file_text(diags: Sequence[Diagnostic]) -> str:
    return json.dumps(diagnostics_to_obj(diags), indent=2, ensure_ascii=False) + "\n"


def atomic_write(path: str | os.PathLike[str], text: str) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_error_file(report: LintReport | Sequence[Diagnostic], path: str | os.PathLike[str]) -> None:
    """Write the error management file. Writes atomically: no partial file on failure."""
    diags = report if isinstance(report, (list, tuple)) else report.diagnostics
    atomic_write(path, error_file_text(diags))


def read_error_file(path: str | os.PathLike[str]) -> list[Diagnostic]:
    with open(path, encoding="utf-8") as fh:
        return diagnostics_from_obj(json.load(fh))


_RED = "\x1b[31m"
_BOLD = "\x1b[1m"
_RESET = "\x1b[0m"


def render_text(report: LintReport | Sequence[Diagnostic], color: bool = False, filename: str | None = None) -> str:
    if isinstance(report, (list, tuple)):
        diags, name = list(report), filename or SOURCE_PATH
    else:
        diags, name = report.diagnostics, filename or report.source_name
    lines = []
    for d in diags:
        code = f"[{d.code}]"
        if color:
            code = f"{_RED}{_BOLD}{code}{_RESET}"
        line = f"{name}:{d.span.line}:{d.span.col} {code} {d.message} (at {d.path})"
        if d.reason:
            line += f": {d.reason}"
        lines.append(line)
    lines.append(f"{len(diags)} error(s)")
    return "\n".join(lines) + "\n"

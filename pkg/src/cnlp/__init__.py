"""Parser, linter and corpus tooling for CNL-P agent prompts."""

from .diagnostics import Diagnostic, render_text, write_error_file
from .frontend import ParseOutcome, parse_document
from .model import AstDocument, FormatError, from_ast_json, json_path_of, to_ast_json
from .semantics import LintOptions, LintReport, lint
from .typesys import Background, load_background

__version__ = "0.1.0"

__all__ = [
    "AstDocument",
    "Background",
    "Diagnostic",
    "FormatError",
    "LintOptions",
    "LintReport",
    "ParseOutcome",
    "from_ast_json",
    "json_path_of",
    "lint",
    "load_background",
    "parse_document",
    "render_text",
    "to_ast_json",
    "write_error_file",
]

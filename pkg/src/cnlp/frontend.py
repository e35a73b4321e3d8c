"""Parser_Like: marker-driven segmentation and per-section parsers.

Every parser returns what it could build plus diagnostics; nothing here raises
on malformed CNL-P. A ``keyword_Like`` marker only counts at the head of a line
(after indentation), so the same words may appear freely inside prose.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Union

from .diagnostics import SOURCE_PATH, Diagnostic, diag, sort_diagnostics
from .model import (
    BASE_TYPES,
    TYPE_NAME_RE,
    VAR_NAME_RE,
    Arg,
    AstDocument,
    Base,
    CallApi,
    Command,
    ConstraintNode,
    Display,
    FieldNode,
    GeneralCommand,
    IfBlock,
    ListOf,
    Literal,
    Named,
    OneOf,
    OptionalOf,
    PersonaNode,
    RequestInput,
    Response,
    Span,
    StepNode,
    TypeDefNode,
    TypeExpr,
    VariableDeclNode,
    VarRef,
    WorkerNode,
    literal_kind,
)

__all__ = [
    "KEYWORDS",
    "Section",
    "Token",
    "ParseOutcome",
    "TypeSyntaxError",
    "tokenize",
    "parse_type_expr",
    "segment",
    "parse_attr_section",
    "parse_types",
    "parse_variables",
    "parse_worker",
    "parse_document",
]

KEYWORDS = frozenset(
    """DEFINE_AGENT END_AGENT DEFINE_PERSONA END_PERSONA DEFINE_CONSTRAINTS END_CONSTRAINTS
    DEFINE_TYPES END_TYPES DEFINE_VARIABLES END_VARIABLES DEFINE_WORKER END_WORKER
    INPUTS OUTPUTS MAIN_FLOW STEP COMMAND CALL REQUEST_INPUT DISPLAY IF ELSE END_IF SET PROMPT""".split()
)

SECTION_KINDS = {
    "PERSONA": "persona",
    "CONSTRAINTS": "constraints",
    "TYPES": "types",
    "VARIABLES": "variables",
    "WORKER": "worker",
}

_MARKER_RE = re.compile(r"[ \t]*(DEFINE|END)_([A-Z][A-Z0-9_]*)(?![A-Za-z0-9_])[ \t]*(.*)")
_LINE_SPLIT_RE = re.compile(r"\r\n|\r|\n")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_UPPER_IDENT_RE = re.compile(r"[A-Z][A-Z0-9_]*\Z")
_FIELD_NAME_RE = re.compile(r"[a-z][a-z0-9_]*\Z")


def split_lines(source: str) -> list[str]:
    return _LINE_SPLIT_RE.split(source)


def _indent(raw: str) -> int:
    return len(raw) - len(raw.lstrip(" \t"))


def _line_span(lineno: int, raw: str) -> Span:
    start = _indent(raw) + 1
    return Span(lineno, start, lineno, max(start, len(raw.rstrip()) + 1))


# --------------------------------------------------------------------------
# Tokens


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | identifier | var_name | type_name | literal | punct | text_run
    lexeme: str
    span: Span

    @property
    def value(self) -> object:
        """Python value of a literal token."""
        lex = self.lexeme
        if lex in ("true", "false"):
            return lex == "true"
        if lex[0] == '"':
            return json.loads(lex, strict=False)
        if lex[0] == "'":
            return lex[1:-1].replace("\\'", "'").replace("\\\\", "\\")
        return float(lex) if "." in lex else int(lex)


_TOKEN_RE = re.compile(
    r"""
     (?P<ws>[ \t]+)
    |(?P<string>"(?:[^"\\]|\\["\\/bfnrt]|\\u[0-9a-fA-F]{4})*"|'(?:[^'\\]|\\.)*')
    |(?P<number>-?[0-9]+(?:\.[0-9]+)?(?![A-Za-z_]))
    |(?P<arrow>->)
    |(?P<word>[A-Za-z_][A-Za-z0-9_]*)
    |(?P<other>\S)
    """,
    re.VERBOSE,
)


def _classify_word(word: str) -> str:
    if word in KEYWORDS:
        return "keyword"
    if word in ("true", "false"):
        return "literal"
    if VAR_NAME_RE.match(word):
        return "var_name"
    if word[0].isupper() and any(c.islower() for c in word):
        return "type_name"
    return "identifier"


def tokenize(text: str, line: int = 1, col: int = 1) -> list[Token]:
    """Split one line of structured text into classified tokens."""
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        lexeme = m.group()
        if kind in ("string", "number"):
            kind = "literal"
        elif kind == "word":
            kind = _classify_word(lexeme)
        else:
            kind = "punct"
        span = Span(line, col + m.start(), line, col + m.end())
        tokens.append(Token(kind, lexeme, span))
    return tokens


def _text_token(raw: str, start: int, lineno: int) -> Token | None:
    """Free text from ``start`` (0-based) to end of line, as a single text_run token."""
    seg = raw[start:]
    stripped = seg.strip()
    if not stripped:
        return None
    begin = start + len(seg) - len(seg.lstrip())
    return Token("text_run", stripped, Span(lineno, begin + 1, lineno, begin + len(stripped) + 1))


# --------------------------------------------------------------------------
# Sections


@dataclass(frozen=True)
class Section:
    kind: str  # persona | constraints | types | variables | worker | agent_header | agent_footer
    body: str
    span: Span
    label: str = ""
    body_line: int = 1

    def lines(self) -> list[tuple[int, str]]:
        if not self.body:
            return []
        return list(enumerate(self.body.split("\n"), self.body_line))


@dataclass
class _Open:
    kind: str
    start: Span
    label: str
    body_line: int
    lines: list[str] = field(default_factory=list)
    duplicate: bool = False

    def close(self, end: Span | None) -> Section:
        if end is not None:
            end_line, end_col = end.end_line, end.end_col
        elif self.lines:
            end_line = self.body_line + len(self.lines) - 1
            end_col = len(self.lines[-1].rstrip()) + 1
        else:
            end_line, end_col = self.start.end_line, self.start.end_col
        if end_line == self.start.line:
            end_col = max(end_col, self.start.col)
        span = Span(self.start.line, self.start.col, end_line, end_col)
        return Section(self.kind, "\n".join(self.lines), span, self.label, self.body_line)


def segment(source: str) -> tuple[list[Section], list[Diagnostic]]:
    """Split source into sections by line-head DEFINE_*/END_* markers."""
    lines = split_lines(source)
    sections: list[Section] = []
    diags: list[Diagnostic] = []
    seen: set[str] = set()
    current: _Open | None = None
    skipping: str | None = None  # name of an unknown or duplicate block being skipped
    agent_open = False
    agent_seen = False
    reported_missing_agent = False

    def close_missing(reason_line: int) -> None:
        nonlocal current
        assert current is not None
        marker = f"END_{current.kind.upper()}"
        if not current.duplicate:
            diags.append(diag("E002", current.kind, current.start,
                              f"missing {marker}",
                              f"section opened at line {current.start.line} is not closed before line {reason_line}"))
            sections.append(current.close(None))
        current = None

    for lineno, raw in enumerate(lines, 1):
        m = _MARKER_RE.match(raw)
        if m is None:
            if current is not None:
                current.lines.append(raw)
            elif skipping is None and raw.strip():
                diags.append(diag("E001", SOURCE_PATH, _line_span(lineno, raw),
                                  "text outside any section",
                                  "only DEFINE_*/END_* section markers may appear at agent level"))
            continue
        which, name, rest = m.groups()
        span = _line_span(lineno, raw)
        if which == "DEFINE":
            if name == "AGENT":
                if agent_open:
                    diags.append(diag("E005", SOURCE_PATH, span, "duplicate DEFINE_AGENT",
                                      "agents cannot be nested"))
                    continue
                if current is not None:
                    close_missing(lineno)
                if agent_seen:
                    diags.append(diag("E005", SOURCE_PATH, span, "duplicate agent block",
                                      "only one DEFINE_AGENT block is allowed per file"))
                    skipping = "AGENT"
                    continue
                agent_open = agent_seen = True
                skipping = None
                sections.append(Section("agent_header", "", span, rest.strip(), lineno + 1))
                continue
            if name in SECTION_KINDS:
                if skipping == "AGENT":
                    continue
                if current is not None:
                    close_missing(lineno)
                skipping = None
                kind = SECTION_KINDS[name]
                if not agent_open and not reported_missing_agent:
                    reported_missing_agent = True
                    diags.append(diag("E002", SOURCE_PATH, span, "missing DEFINE_AGENT",
                                      "sections must be enclosed in DEFINE_AGENT ... END_AGENT"))
                current = _Open(kind, span, rest.strip(), lineno + 1)
                if kind in seen:
                    current.duplicate = True
                    diags.append(diag("E005", SOURCE_PATH, span, f"duplicate {kind} section",
                                      f"DEFINE_{name} already appeared; this copy is ignored"))
                seen.add(kind)
                continue
            if skipping == "AGENT":
                continue
            diags.append(diag("E001", SOURCE_PATH, span, f"unknown section keyword DEFINE_{name}",
                              "known sections: " + ", ".join(f"DEFINE_{k}" for k in SECTION_KINDS)))
            if current is None:
                skipping = name
            continue
        # END_*
        if current is not None and SECTION_KINDS.get(name) == current.kind:
            if not current.duplicate:
                sections.append(current.close(span))
            current = None
            continue
        if skipping is not None and name == skipping:
            skipping = None
            continue
        if name == "AGENT":
            if current is not None:
                close_missing(lineno)
            skipping = None
            if agent_open:
                agent_open = False
                sections.append(Section("agent_footer", "", span, "", lineno + 1))
            else:
                diags.append(diag("E001", SOURCE_PATH, span, "END_AGENT without DEFINE_AGENT",
                                  "no agent block is open"))
            continue
        if name in SECTION_KINDS:
            if skipping is not None:
                continue
            if current is not None:
                close_missing(lineno)
            diags.append(diag("E001", SOURCE_PATH, span, f"unmatched END_{name}",
                              f"no DEFINE_{name} is open"))
            continue
        # Any other END_* (END_IF, ...) is ordinary body text.
        if current is not None:
            current.lines.append(raw)
        elif skipping is None:
            diags.append(diag("E001", SOURCE_PATH, span, f"unexpected END_{name}",
                              "only DEFINE_*/END_* section markers may appear at agent level"))

    last = len(lines)
    if current is not None:
        close_missing(last + 1)
    if agent_open:
        header = next(s for s in sections if s.kind == "agent_header")
        diags.append(diag("E002", SOURCE_PATH, header.span, "missing END_AGENT",
                          f"agent opened at line {header.span.line} is never closed"))
    if not agent_seen and not reported_missing_agent:
        diags.append(diag("E002", SOURCE_PATH, Span.point(), "missing DEFINE_AGENT",
                          "no agent block found"))
    return sections, diags


# --------------------------------------------------------------------------
# Persona and constraints


def _lex_attr_line(lineno: int, raw: str) -> list[Token]:
    """Tokens of ``NAME: text``: identifier, ':' punct, then one text_run."""
    start = _indent(raw)
    m = re.match(r"([^\s:]+)[ \t]*:", raw[start:])
    if m is None:
        tok = _text_token(raw, 0, lineno)
        return [tok] if tok else []
    name = m.group(1)
    name_tok = Token(_classify_word(name) if _IDENT_RE.match(name) else "text_run", name,
                     Span(lineno, start + 1, lineno, start + 1 + len(name)))
    colon_at = start + m.end() - 1
    tokens = [name_tok, Token("punct", ":", Span(lineno, colon_at + 1, lineno, colon_at + 2))]
    rest = _text_token(raw, colon_at + 1, lineno)
    if rest is not None:
        tokens.append(rest)
    return tokens


def parse_attr_section(section: Section) -> tuple[PersonaNode | tuple[ConstraintNode, ...], list[Diagnostic]]:
    """Parse a persona or constraints body: one ``NAME: text`` pair per line."""
    path = section.kind
    diags: list[Diagnostic] = []
    pairs: dict[str, tuple[str, Span]] = {}
    for lineno, raw in section.lines():
        if not raw.strip():
            continue
        span = _line_span(lineno, raw)
        tokens = _lex_attr_line(lineno, raw)
        if len(tokens) < 2 or tokens[1].lexeme != ":":
            diags.append(diag("E003", path, span, "malformed attribute line",
                              "expected 'NAME: text'"))
            continue
        name_tok = tokens[0]
        if name_tok.kind == "keyword" or not _UPPER_IDENT_RE.match(name_tok.lexeme):
            diags.append(diag("E003", path, span, "malformed attribute name",
                              f"{name_tok.lexeme!r} is not an upper-case identifier"))
            continue
        if len(tokens) < 3:
            diags.append(diag("E003", path, span, "empty attribute value",
                              f"{name_tok.lexeme} has no text after ':'"))
            continue
        if name_tok.lexeme in pairs:
            diags.append(diag("E003", path, span, "duplicate attribute",
                              f"{name_tok.lexeme} is already defined at line {pairs[name_tok.lexeme][1].line}"))
            continue
        pairs[name_tok.lexeme] = (tokens[2].lexeme, span)

    if section.kind == "constraints":
        return tuple(ConstraintNode(n, t, s) for n, (t, s) in pairs.items()), diags

    role, role_span = pairs.pop("ROLE", ("", section.span))
    if not role:
        diags.append(diag("E003", path, section.span, "persona without ROLE",
                          "persona requires ROLE"))
    persona = PersonaNode(
        role,
        {n: t for n, (t, _) in pairs.items()},
        section.span,
        role_span,
        {n: s for n, (_, s) in pairs.items()},
    )
    return persona, diags


# --------------------------------------------------------------------------
# Type expressions


class TypeSyntaxError(ValueError):
    pass


def parse_type_expr(tokens: list[Token]) -> TypeExpr:
    """Parse ``text | number | boolean | TypeName | list of T | one of [...]``
    with any number of trailing ``(optional)`` suffixes (only one is legal)."""
    pos = 0

    def peek(offset: int = 0) -> Token | None:
        i = pos + offset
        return tokens[i] if i < len(tokens) else None

    def core() -> TypeExpr:
        nonlocal pos
        tok = peek()
        if tok is None:
            raise TypeSyntaxError("missing type expression")
        word = tok.lexeme
        nxt = peek(1)
        if word in BASE_TYPES:
            pos += 1
            return Base(word)
        if word == "list" and nxt is not None and nxt.lexeme == "of":
            pos += 2
            return ListOf(core())
        if word == "one" and nxt is not None and nxt.lexeme == "of":
            pos += 2
            return one_of()
        if tok.kind in ("type_name", "identifier") and word[0].isupper() and TYPE_NAME_RE.match(word):
            pos += 1
            return Named(word)
        if nxt is not None and nxt.lexeme == "of":
            raise TypeSyntaxError(f"unknown constructor {word!r}")
        raise TypeSyntaxError(f"unknown type {word!r}")

    def one_of() -> OneOf:
        nonlocal pos
        tok = peek()
        if tok is None or tok.lexeme != "[":
            raise TypeSyntaxError("'one of' must be followed by '['")
        pos += 1
        values = []
        while True:
            tok = peek()
            if tok is None:
                raise TypeSyntaxError("unterminated literal list")
            if tok.lexeme == "]" and not values:
                raise TypeSyntaxError("'one of' needs at least one literal")
            if tok.kind != "literal":
                raise TypeSyntaxError(f"expected a literal, got {tok.lexeme!r}")
            values.append(tok.value)
            pos += 1
            tok = peek()
            if tok is None:
                raise TypeSyntaxError("unterminated literal list")
            pos += 1
            if tok.lexeme == "]":
                break
            if tok.lexeme != ",":
                raise TypeSyntaxError(f"expected ',' or ']', got {tok.lexeme!r}")
        if len({literal_kind(v) for v in values}) != 1:
            raise TypeSyntaxError("'one of' literals must all share one base type")
        return OneOf(tuple(values))

    result = core()
    while pos < len(tokens):
        if [t.lexeme for t in tokens[pos:pos + 3]] != ["(", "optional", ")"]:
            raise TypeSyntaxError(f"unexpected {tokens[pos].lexeme!r}")
        if isinstance(result, OptionalOf):
            raise TypeSyntaxError("optional may not wrap optional")
        result = OptionalOf(result)
        pos += 3
    return result


@dataclass
class _TypeBuilder:
    name: str
    header: Span
    fields: dict[str, FieldNode] = field(default_factory=dict)
    end: Span | None = None
    saw_field_line: bool = False

    def build(self) -> TypeDefNode:
        end = self.end or self.header
        return TypeDefNode(self.name, self.fields, Span(self.header.line, self.header.col, end.end_line, end.end_col))


def parse_types(section: Section) -> tuple[dict[str, TypeDefNode], list[Diagnostic]]:
    diags: list[Diagnostic] = []
    out: dict[str, TypeDefNode] = {}
    current: _TypeBuilder | None = None
    skip_fields = False

    def finish() -> None:
        if current is None:
            return
        if not current.saw_field_line:
            diags.append(diag("E004", f"types.{current.name}", current.header, "type without fields",
                              f"{current.name} must declare at least one field"))
        out[current.name] = current.build()

    for lineno, raw in section.lines():
        stripped = raw.strip()
        if not stripped:
            continue
        span = _line_span(lineno, raw)
        header = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)[ \t]*:", stripped)
        if header and header.group(1)[0].isupper():
            finish()
            current = None
            name = header.group(1)
            skip_fields = True
            if not TYPE_NAME_RE.match(name):
                diags.append(diag("E004", "types", span, "malformed type name", f"{name!r} is not a type name"))
            elif name in out:
                diags.append(diag("E004", "types", span, "duplicate type",
                                  f"{name} is already defined at line {out[name].span.line}"))
            else:
                skip_fields = False
                current = _TypeBuilder(name, span)
            continue
        if skip_fields:
            continue
        if current is None:
            diags.append(diag("E004", "types", span, "field outside a type definition",
                              "expected 'TypeName:' before field lines"))
            continue
        tpath = f"types.{current.name}"
        current.saw_field_line = True
        m = re.match(r"([^\s:]+)[ \t]*:(.*)", stripped)
        if m is None:
            diags.append(diag("E004", tpath, span, "malformed field", "expected 'field: type'"))
            continue
        fname, rest = m.group(1), m.group(2)
        if not _FIELD_NAME_RE.match(fname):
            diags.append(diag("E004", tpath, span, "malformed field name",
                              f"{fname!r} is not a lower-case identifier"))
            continue
        if fname in current.fields:
            diags.append(diag("E004", tpath, span, "duplicate field",
                              f"{current.name}.{fname} is declared twice"))
            continue
        try:
            texpr = parse_type_expr(tokenize(rest, lineno, _indent(raw) + m.start(2) + 1))
        except TypeSyntaxError as exc:
            diags.append(diag("E004", tpath, span, "malformed type expression", str(exc)))
            continue
        current.fields[fname] = FieldNode(fname, texpr, span)
        current.end = span
    finish()
    return out, diags


# --------------------------------------------------------------------------
# Variables


def parse_variables(section: Section) -> tuple[dict[str, VariableDeclNode], list[Diagnostic]]:
    diags: list[Diagnostic] = []
    out: dict[str, VariableDeclNode] = {}
    for lineno, raw in section.lines():
        stripped = raw.strip()
        if not stripped:
            continue
        span = _line_span(lineno, raw)
        m = re.match(r"([^\s:]+)[ \t]*:(.*)", stripped)
        if m is None:
            diags.append(diag("E003", "variables", span, "malformed variable declaration",
                              "expected '_name: type [= literal]'"))
            continue
        name = m.group(1)
        if not VAR_NAME_RE.match(name):
            diags.append(diag("E003", "variables", span, "malformed variable name",
                              f"{name!r} does not match _[a-z0-9_]+"))
            continue
        if name in out:
            diags.append(diag("E003", "variables", span, "duplicate variable",
                              f"{name} is already declared at line {out[name].span.line}"))
            continue
        tokens = tokenize(m.group(2), lineno, _indent(raw) + m.start(2) + 1)
        initial = None
        eq = next((i for i, t in enumerate(tokens) if t.lexeme == "="), None)
        if eq is not None:
            tail = tokens[eq + 1:]
            if len(tail) != 1 or tail[0].kind != "literal":
                diags.append(diag("E003", "variables", span, "malformed initial value",
                                  "expected a single literal after '='"))
                continue
            initial = tail[0].value
            tokens = tokens[:eq]
        try:
            texpr = parse_type_expr(tokens)
        except TypeSyntaxError as exc:
            diags.append(diag("E004", "variables", span, "malformed type expression", str(exc)))
            continue
        out[name] = VariableDeclNode(name, texpr, initial, "section", span)
    return out, diags


# --------------------------------------------------------------------------
# Worker


class _CommandError(ValueError):
    pass


def _parse_call(tokens: list[Token]) -> CallApi:
    # tokens[0] is CALL
    if len(tokens) < 2 or tokens[1].kind not in ("identifier", "type_name", "var_name"):
        raise _CommandError("CALL must name an API")
    api = tokens[1].lexeme
    if len(tokens) < 3 or tokens[2].lexeme != "(":
        raise _CommandError("CALL requires parentheses around its arguments")
    pos = 3
    paras: dict[str, Arg] = {}
    if pos < len(tokens) and tokens[pos].lexeme == ")":
        pos += 1
    else:
        while True:
            if pos + 2 >= len(tokens):
                raise _CommandError("unterminated argument list")
            key, eq, val = tokens[pos:pos + 3]
            if key.kind in ("punct", "literal") or eq.lexeme != "=":
                raise _CommandError("arguments must be written key=value")
            if key.lexeme in paras:
                raise _CommandError(f"argument {key.lexeme!r} given twice")
            span = Span(key.span.line, key.span.col, val.span.end_line, val.span.end_col)
            if val.kind == "literal":
                paras[key.lexeme] = Arg(Literal(val.value), span)
            elif val.kind == "var_name":
                paras[key.lexeme] = Arg(VarRef(val.lexeme), span)
            else:
                raise _CommandError(f"argument value {val.lexeme!r} is neither a literal nor a _variable")
            pos += 3
            if pos >= len(tokens):
                raise _CommandError("unterminated argument list")
            sep = tokens[pos]
            pos += 1
            if sep.lexeme == ")":
                break
            if sep.lexeme != ",":
                raise _CommandError(f"expected ',' or ')', got {sep.lexeme!r}")
    response = None
    rest = tokens[pos:]
    if rest:
        lex = [t.lexeme for t in rest]
        if lex[:2] != ["->", "SET"] or len(rest) < 3 or rest[2].kind != "var_name":
            raise _CommandError("expected '-> SET _name[: Type]' after the argument list")
        var_type = None
        if len(rest) > 3:
            if len(rest) != 5 or lex[3] != ":" or not (TYPE_NAME_RE.match(lex[4]) or lex[4] in BASE_TYPES):
                raise _CommandError("response type must be ': TypeName'")
            var_type = lex[4]
        response = Response(rest[2].lexeme, var_type, Span(rest[0].span.line, rest[0].span.col, rest[-1].span.end_line, rest[-1].span.end_col))
    return CallApi(api, paras, response)


def _parse_request(tokens: list[Token]) -> RequestInput:
    if len(tokens) < 2 or tokens[1].kind != "var_name":
        raise _CommandError("REQUEST_INPUT must name a _variable")
    if len(tokens) < 3 or tokens[2].lexeme != ":":
        raise _CommandError("expected ':' and a type after the variable")
    idx = next((i for i, t in enumerate(tokens) if t.lexeme == "PROMPT"), None)
    if idx is None:
        raise _CommandError("REQUEST_INPUT requires PROMPT \"text\"")
    if idx + 2 != len(tokens) or tokens[idx + 1].kind != "literal" or not isinstance(tokens[idx + 1].value, str):
        raise _CommandError("PROMPT must be followed by exactly one quoted string")
    try:
        texpr = parse_type_expr(tokens[3:idx])
    except TypeSyntaxError as exc:
        raise _CommandError(f"bad input type: {exc}") from exc
    return RequestInput(tokens[1].lexeme, texpr, tokens[idx + 1].value)


def _parse_display(tokens: list[Token]) -> Display:
    if len(tokens) != 2 or tokens[1].kind != "literal" or not isinstance(tokens[1].value, str):
        raise _CommandError("DISPLAY must be followed by exactly one quoted string")
    return Display(tokens[1].value)


@dataclass
class _IfFrame:
    condition: str
    path: str
    start: Span
    then: list = field(default_factory=list)
    else_: list = field(default_factory=list)
    in_else: bool = False
    end: Span | None = None

    @property
    def branch(self) -> list:
        return self.else_ if self.in_else else self.then

    @property
    def prefix(self) -> str:
        return f"{self.path}.{'else' if self.in_else else 'then'}"


_Item = Union[Command, _IfFrame]


def _freeze(items: list[_Item]) -> tuple[Command, ...]:
    out = []
    for item in items:
        if isinstance(item, _IfFrame):
            end = item.end or item.start
            span = Span(item.start.line, item.start.col, end.end_line, end.end_col)
            out.append(IfBlock(item.condition, _freeze(item.then), _freeze(item.else_), span))
        else:
            out.append(item)
    return tuple(out)


_STEP_RE = re.compile(r"STEP[ \t]+([0-9]+)(?![0-9])[ \t]*(:?)[ \t]*(.*)")
_HEAD_RE = re.compile(r"(INPUTS|OUTPUTS|MAIN_FLOW)(?![A-Za-z0-9_])[ \t]*(:?)(.*)")


def _first_word(stripped: str) -> str:
    m = re.match(r"[A-Za-z_][A-Za-z0-9_]*", stripped)
    return m.group() if m else ""


def parse_worker(section: Section, worker_parser: Callable | None = None) -> tuple[WorkerNode, list[Diagnostic]]:
    """Parse a worker section; ``worker_parser`` substitutes another strategy."""
    if worker_parser is not None:
        return worker_parser(section)
    return _parse_worker_markers(section)


def _parse_worker_markers(section: Section) -> tuple[WorkerNode, list[Diagnostic]]:
    diags: list[Diagnostic] = []
    label = section.label.rstrip(":").strip()
    if not _IDENT_RE.match(label):
        diags.append(diag("E003", "worker", section.span, "malformed worker header",
                          "expected 'DEFINE_WORKER Name:'"))
        label = label if label else ""
    io: dict[str, tuple[str, ...]] = {"INPUTS": (), "OUTPUTS": ()}
    io_spans: dict[str, Span] = {"INPUTS": section.span, "OUTPUTS": section.span}
    in_flow = False
    steps: list[StepNode] = []
    step_items: list[_Item] | None = None
    step_no = 0
    step_start: Span | None = None
    step_end: Span | None = None
    if_stack: list[_IfFrame] = []

    def close_ifs(at_line: int) -> None:
        while if_stack:
            frame = if_stack.pop()
            diags.append(diag("E002", frame.path, frame.start, "missing END_IF",
                              f"IF opened at line {frame.start.line} is not closed before line {at_line}"))

    def close_step(at_line: int) -> None:
        nonlocal step_items
        close_ifs(at_line)
        if step_items is None:
            return
        assert step_start is not None and step_end is not None
        path = f"worker.main_flow.step_{step_no}"
        if not step_items:
            diags.append(diag("E003", path, step_start, "empty step",
                              f"STEP {step_no} has no commands"))
        span = Span(step_start.line, step_start.col, step_end.end_line, step_end.end_col)
        steps.append(StepNode(step_no, _freeze(step_items), span))
        step_items = None

    def container() -> tuple[list[_Item], str]:
        if if_stack:
            return if_stack[-1].branch, if_stack[-1].prefix
        assert step_items is not None
        return step_items, f"worker.main_flow.step_{step_no}"

    last_line = section.body_line
    for lineno, raw in section.lines():
        stripped = raw.strip()
        if not stripped:
            continue
        last_line = lineno
        span = _line_span(lineno, raw)
        col0 = _indent(raw) + 1

        if not in_flow:
            m = _HEAD_RE.match(stripped)
            if m is None:
                diags.append(diag("E003", "worker", span, "unexpected line in worker header",
                                  "expected INPUTS:, OUTPUTS: or MAIN_FLOW:"))
                continue
            head, colon, rest = m.groups()
            if not colon:
                diags.append(diag("E003", "worker", span, f"malformed {head} line", f"expected '{head}:'"))
            if head == "MAIN_FLOW":
                if rest.strip():
                    diags.append(diag("E003", "worker", span, "text after MAIN_FLOW:",
                                      "steps start on the following lines"))
                in_flow = True
                continue
            names = [n.strip() for n in rest.split(",")] if rest.strip() else []
            if len(names) == 1 and names[0].lower() == "none":
                names = []
            ipath = f"worker.{head.lower()}"
            bad = [n for n in names if not VAR_NAME_RE.match(n)]
            if bad:
                diags.append(diag("E003", ipath, span, f"malformed {head} list",
                                  f"{', '.join(repr(b) for b in bad)} are not _variable names"))
            io[head] = tuple(n for n in names if VAR_NAME_RE.match(n))
            io_spans[head] = span
            continue

        sm = _STEP_RE.match(stripped)
        if sm is not None:
            close_step(lineno)
            number = int(sm.group(1))
            if number != step_no + 1:
                diags.append(diag("E003", "worker", span, "out-of-order step number",
                                  f"expected STEP {step_no + 1}, found STEP {number}"))
                if number <= step_no:
                    number = step_no + 1
            if not sm.group(2) or sm.group(3):
                diags.append(diag("E003", "worker", span, "malformed STEP header", "expected 'STEP n:'"))
            step_no = number
            step_items = []
            step_start = step_end = span
            continue

        if step_items is None:
            diags.append(diag("E003", "worker", span, "command outside a STEP",
                              "commands must follow a 'STEP n:' header"))
            continue
        step_end = span
        items, prefix = container()
        path = f"{prefix}.command{len(items) + 1}"
        word = _first_word(stripped)

        if word == "END_IF" and stripped == "END_IF":
            if not if_stack:
                diags.append(diag("E003", path, span, "END_IF without IF", "no IF block is open"))
                items.append(GeneralCommand(stripped, span))
                continue
            frame = if_stack.pop()
            frame.end = span
            if not frame.then:
                diags.append(diag("E003", frame.path, frame.start, "empty IF block",
                                  "IF requires at least one command"))
            continue
        if word == "ELSE" and re.fullmatch(r"ELSE[ \t]*:?", stripped):
            if not if_stack or if_stack[-1].in_else:
                diags.append(diag("E003", path, span, "ELSE without IF", "no open IF block to attach to"))
                items.append(GeneralCommand(stripped, span))
                continue
            if not stripped.endswith(":"):
                diags.append(diag("E003", if_stack[-1].path, span, "malformed ELSE", "expected 'ELSE:'"))
            if_stack[-1].in_else = True
            continue
        if word == "IF":
            cond = stripped[2:].strip()
            if cond.endswith(":"):
                cond = cond[:-1].rstrip()
            else:
                diags.append(diag("E003", path, span, "malformed IF", "expected 'IF condition:'"))
            if not cond:
                diags.append(diag("E003", path, span, "IF without condition", "expected 'IF condition:'"))
            frame = _IfFrame(cond, path, span)
            items.append(frame)
            if_stack.append(frame)
            continue
        if word == "COMMAND":
            text = stripped[len("COMMAND"):].strip()
            if not text:
                diags.append(diag("E003", path, span, "empty COMMAND", "COMMAND must be followed by text"))
            items.append(GeneralCommand(text or stripped, span))
            continue

        parser = {"CALL": _parse_call, "REQUEST_INPUT": _parse_request, "DISPLAY": _parse_display}.get(word)
        if parser is None:
            items.append(GeneralCommand(stripped, span))
            continue
        try:
            cmd = parser(tokenize(stripped, lineno, col0))
        except _CommandError as exc:
            diags.append(diag("E003", path, span, f"malformed {word}", str(exc)))
            items.append(GeneralCommand(stripped, span))
            continue
        items.append(replace(cmd, span=span))

    if in_flow:
        close_step(last_line + 1)
        if not steps:
            diags.append(diag("E003", "worker", section.span, "MAIN_FLOW without steps",
                              "MAIN_FLOW requires at least one STEP"))
    else:
        diags.append(diag("E003", "worker", section.span, "worker without MAIN_FLOW",
                          "worker requires MAIN_FLOW"))
    worker = WorkerNode(label, io["INPUTS"], io["OUTPUTS"], tuple(steps), section.span,
                        io_spans["INPUTS"], io_spans["OUTPUTS"])
    return worker, diags


# --------------------------------------------------------------------------
# Whole document


@dataclass(frozen=True)
class ParseOutcome:
    document: AstDocument
    diagnostics: list[Diagnostic]
    sections: list[Section] = field(default_factory=list, compare=False)


def parse_document(source: str, worker_parser: Callable | None = None) -> ParseOutcome:
    """Segment and parse a whole CNL-P file; always returns a (possibly partial) document."""
    sections, diags = segment(source)
    agent_name = ""
    doc_span = Span.point()
    persona = None
    constraints: tuple[ConstraintNode, ...] = ()
    types: dict[str, TypeDefNode] = {}
    variables: dict[str, VariableDeclNode] = {}
    worker = None
    for sec in sections:
        if sec.kind == "agent_header":
            agent_name = sec.label.rstrip(":").strip()
            doc_span = sec.span
            if not _IDENT_RE.match(agent_name):
                diags.append(diag("E003", SOURCE_PATH, sec.span, "malformed agent header",
                                  "expected 'DEFINE_AGENT Name'"))
        elif sec.kind == "agent_footer":
            doc_span = Span(doc_span.line, doc_span.col, sec.span.end_line, sec.span.end_col)
        elif sec.kind == "persona":
            persona, d = parse_attr_section(sec)
            diags += d
        elif sec.kind == "constraints":
            constraints, d = parse_attr_section(sec)
            diags += d
        elif sec.kind == "types":
            types, d = parse_types(sec)
            diags += d
        elif sec.kind == "variables":
            variables, d = parse_variables(sec)
            diags += d
        elif sec.kind == "worker":
            worker, d = parse_worker(sec, worker_parser)
            diags += d
    doc = AstDocument(agent_name, persona, constraints, types, variables, worker, doc_span)
    return ParseOutcome(doc, sort_diagnostics(diags), sections)

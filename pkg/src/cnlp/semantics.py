"""NodeVisitor_Like: multi-pass semantic checks over the AST_Like JSON.

Passes, in order: collect temporary declarations, verify them against globals
and section variables, check variable references, check API calls. Every pass
runs regardless of earlier findings; later passes only see validated symbols.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterator, Mapping

from .diagnostics import Diagnostic, diag, sort_diagnostics
from .frontend import parse_document
from .model import (
    BASE_TYPES,
    Base,
    Named,
    Span,
    TypeExpr,
    to_ast_json,
    type_from_json,
    type_to_json,
    type_to_text,
)
from .typesys import (
    Background,
    TypeSchema,
    assignable,
    lower_types,
    named_refs,
    type_info_obj,
    validate_value,
)

__all__ = [
    "Declaration",
    "DeclMap",
    "Symbol",
    "SymbolTable",
    "LintOptions",
    "LintReport",
    "iter_commands",
    "collect_declarations",
    "check_declarations",
    "check_references",
    "check_api_calls",
    "lint",
]

_INTERP_RE = re.compile(r"\{(_[a-z0-9_]+)\}")
BACKGROUND_PATH = "<background>"


def _as_obj(ast_json: str | Mapping[str, Any]) -> Mapping[str, Any]:
    return json.loads(ast_json) if isinstance(ast_json, str) else ast_json


class _Spans:
    def __init__(self, ast: Mapping[str, Any]) -> None:
        self.spans = ast.get("spans", {})

    def __call__(self, path: str) -> Span:
        while path:
            raw = self.spans.get(path)
            if raw is not None:
                return Span.from_list(raw)
            path = path.rpartition(".")[0]
        return Span.point()


def iter_commands(ast: Mapping[str, Any]) -> Iterator[tuple[str, Mapping[str, Any], int]]:
    """Yield ``(path, command_object, order)`` for every command in document order."""
    worker = ast.get("worker")
    if not worker:
        return
    counter = 0

    def walk(block: Mapping[str, Any], prefix: str) -> Iterator[tuple[str, Mapping[str, Any], int]]:
        nonlocal counter
        for key, cmd in block.items():
            path = f"{prefix}.{key}"
            counter += 1
            yield path, cmd, counter
            if cmd.get("type") == "if_block":
                yield from walk(cmd.get("then", {}), f"{path}.then")
                yield from walk(cmd.get("else", {}), f"{path}.else")

    for step_key, body in worker.get("main_flow", {}).items():
        yield from walk(body, f"worker.main_flow.{step_key}")


# --------------------------------------------------------------------------
# Pass 1: declarations


@dataclass(frozen=True)
class Declaration:
    name: str
    var_type: TypeExpr | None
    path: str
    span: Span
    order: int
    api: str | None = None  # set for call responses

    def to_obj(self) -> dict[str, Any]:
        return {
            "var_type": None if self.var_type is None else type_to_json(self.var_type),
            "path": self.path,
            "span": self.span.to_list(),
        }


@dataclass
class DeclMap:
    entries: dict[str, list[Declaration]] = field(default_factory=dict)

    def add(self, decl: Declaration) -> None:
        self.entries.setdefault(decl.name, []).append(decl)

    def in_order(self) -> list[Declaration]:
        return sorted((d for ds in self.entries.values() for d in ds), key=lambda d: d.order)

    def __len__(self) -> int:
        return len(self.entries)


def collect_declarations(ast_json: str | Mapping[str, Any]) -> DeclMap:
    """Find every ``response`` and REQUEST_INPUT target under the worker."""
    ast = _as_obj(ast_json)
    spans = _Spans(ast)
    decls = DeclMap()
    for path, cmd, order in iter_commands(ast):
        kind = cmd.get("type")
        if kind == "call_api" and "response" in cmd:
            resp = cmd["response"]
            vtype = resp.get("var_type")
            texpr = None
            if vtype is not None:
                texpr = Base(vtype) if vtype in BASE_TYPES else Named(vtype)
            decls.add(Declaration(resp["name"], texpr, path, spans(f"{path}.response"), order, cmd.get("api")))
        elif kind == "request_input":
            decls.add(Declaration(cmd["var"], type_from_json(cmd["var_type"]), path, spans(path), order))
    return decls


@dataclass(frozen=True)
class Symbol:
    name: str
    type: TypeExpr | None  # None: declared, but its type could not be established
    origin: str  # global | section | temporary
    declared_at: str
    span: Span = Span.point()
    order: int = 0  # command order for temporaries; 0 for everything visible up front
    value: Any = None
    has_value: bool = False


@dataclass
class SymbolTable:
    symbols: dict[str, Symbol] = field(default_factory=dict)

    def __contains__(self, name: object) -> bool:
        return name in self.symbols

    def get(self, name: str) -> Symbol | None:
        return self.symbols.get(name)

    def to_obj(self) -> dict[str, Any]:
        return {
            name: {
                "type": None if s.type is None else type_to_json(s.type),
                "origin": s.origin,
                "declared_at": s.declared_at,
            }
            for name, s in self.symbols.items()
        }


def _unknown_refs(t: TypeExpr, types: Mapping[str, TypeSchema]) -> list[str]:
    return [r for r in named_refs(t) if r not in types]


def check_declarations(
    decls: DeclMap,
    doc_vars: Mapping[str, Any],
    background: Background,
    types: Mapping[str, TypeSchema],
    *,
    spans: Mapping[str, Any] | None = None,
    check_apis: bool = True,
    check_types: bool = True,
) -> tuple[SymbolTable, list[dict[str, Any]], list[Diagnostic]]:
    """Merge globals, section variables and temporaries into one symbol table.

    ``doc_vars`` is the ``variables`` object of the AST_Like JSON. Returns the
    table, the variable description records, and diagnostics.
    """
    table = SymbolTable()
    diags: list[Diagnostic] = []
    records: list[dict[str, Any]] = []

    for name, g in background.globals.items():
        table.symbols[name] = Symbol(name, g.type, "global", BACKGROUND_PATH, value=g.value, has_value=g.has_value)

    for name, entry in doc_vars.items():
        path = f"variables.{name}"
        span = _Spans({"spans": spans or {}})(path)
        texpr = type_from_json(entry["type"])
        if name in table:
            diags.append(diag("E102", path, span, "variable redeclaration",
                              f"{name} is already a global variable"))
            continue
        unknown = _unknown_refs(texpr, types)
        for ref in unknown if check_types else ():
            diags.append(diag("E103", path, span, "unknown type name",
                              f"variable {name} has undefined type {ref}"))
        table.symbols[name] = Symbol(name, None if unknown else texpr, "section", path, span)

    for d in decls.in_order():
        existing = table.get(d.name)
        if existing is not None:
            where = "a global variable" if existing.origin == "global" else (
                "a section variable" if existing.origin == "section" else f"already declared at {existing.declared_at}")
            diags.append(diag("E102", d.path, d.span, "variable redeclaration",
                              f"{d.name} is {where}"))
            continue
        vtype = d.var_type
        valid = True
        api = background.apis.get(d.api) if d.api is not None else None
        if vtype is None and api is not None and api.returns is not None:
            vtype = Base(api.returns) if api.returns in BASE_TYPES else Named(api.returns)
        if vtype is None:
            valid = False
        else:
            unknown = _unknown_refs(vtype, types)
            for ref in unknown if check_types else ():
                diags.append(diag("E103", d.path, d.span, "unknown type name",
                                  f"{d.name} is declared with undefined type {ref}"))
            if unknown:
                vtype, valid = None, False
            elif check_apis and api is not None:
                if api.returns is None:
                    diags.append(diag("E109", d.path, d.span, "response type conflict",
                                      f"API {api.name} returns nothing, but its response is stored in {d.name}"))
                    vtype, valid = None, False
                else:
                    ret: TypeExpr = Base(api.returns) if api.returns in BASE_TYPES else Named(api.returns)
                    if not assignable(ret, vtype, types):
                        diags.append(diag("E109", d.path, d.span, "response type conflict",
                                          f"{d.name} is declared as {type_to_text(vtype)} but API {api.name} returns {api.returns}"))
                        vtype, valid = None, False
        # Declarations that fail validation stay visible but untyped so later passes do not cascade.
        table.symbols[d.name] = Symbol(d.name, vtype, "temporary", d.path, d.span, d.order)
        if valid and vtype is not None:
            records.append({"name": d.name, "type": type_to_text(vtype), "origin": "temporary", "declared_at": d.path})
    return table, records, diags


# --------------------------------------------------------------------------
# Pass 2: references


def _check_ref(name: str, path: str, span: Span, order: int, symbols: SymbolTable,
               check_globals: bool, out: list[Diagnostic]) -> None:
    sym = symbols.get(name)
    if sym is None:
        if check_globals:
            out.append(diag("E101", path, span, "undeclared variable",
                            f"{name} is never declared"))
        return
    if sym.origin == "temporary" and sym.order >= order:
        out.append(diag("E101", path, span, "variable used before declaration",
                        f"{name} is used before its declaration at {sym.declared_at}"))


def check_references(
    ast_json: str | Mapping[str, Any], symbols: SymbolTable, *, check_globals: bool = True
) -> list[Diagnostic]:
    """Check INPUTS/OUTPUTS, argument variables and ``{var}`` interpolations."""
    ast = _as_obj(ast_json)
    spans = _Spans(ast)
    out: list[Diagnostic] = []
    worker = ast.get("worker")
    if not worker:
        return out
    for name in worker.get("inputs", []):
        _check_ref(name, "worker.inputs", spans("worker.inputs"), 0, symbols, check_globals, out)
    for path, cmd, order in iter_commands(ast):
        kind = cmd.get("type")
        if kind == "call_api":
            for key, arg in cmd.get("paras", {}).items():
                if "var" in arg:
                    ppath = f"{path}.paras.{key}"
                    _check_ref(arg["var"], ppath, spans(ppath), order, symbols, check_globals, out)
        elif kind == "display":
            for name in dict.fromkeys(_INTERP_RE.findall(cmd.get("template", ""))):
                _check_ref(name, path, spans(path), order, symbols, check_globals, out)
    for name in worker.get("outputs", []):
        _check_ref(name, "worker.outputs", spans("worker.outputs"), 1 << 30, symbols, check_globals, out)
    return out


# --------------------------------------------------------------------------
# Pass 3: API calls


def check_api_calls(
    ast_json: str | Mapping[str, Any],
    background: Background,
    symbols: SymbolTable,
    types: Mapping[str, TypeSchema] | None = None,
) -> list[Diagnostic]:
    """Check each call against its API schema: names, required keys, argument types and values."""
    ast = _as_obj(ast_json)
    spans = _Spans(ast)
    types = types if types is not None else background.types
    out: list[Diagnostic] = []
    for path, cmd, _ in iter_commands(ast):
        if cmd.get("type") != "call_api":
            continue
        name = cmd["api"]
        api = background.apis.get(name)
        if api is None:
            out.append(diag("E104", path, spans(path), "unknown API",
                            f"API {name} is not defined in the background data"))
            continue
        paras = cmd.get("paras", {})
        for key, param in api.params.items():
            if param.required and key not in paras:
                out.append(diag("E105", path, spans(path), "missing required parameter",
                                f"API {name} requires parameter {key!r} ({type_to_text(param.schema)})"))
        for key, arg in paras.items():
            ppath = f"{path}.paras.{key}"
            span = spans(ppath)
            param = api.params.get(key)
            if param is None:
                out.append(diag("E106", ppath, span, "unknown parameter",
                                f"API {name} has no parameter {key!r}; expected one of {sorted(api.params)}"))
                continue
            unknown = _unknown_refs(param.schema, types)
            if unknown:
                out.append(diag("E103", ppath, span, "unknown type name",
                                f"parameter {key!r} of API {name} uses undefined type {unknown[0]}"))
                continue
            if "literal" in arg:
                for v in validate_value(arg["literal"], param.schema, types, ppath, span):
                    out.append(v if v.code != "E107" else diag(
                        "E107", v.path, span, "parameter type mismatch",
                        f"parameter {key!r} of API {name} expects {type_to_text(param.schema)}: {v.reason}"))
                continue
            sym = symbols.get(arg["var"])
            if sym is None or sym.type is None:
                continue  # reported by the reference pass, or untyped after an earlier diagnostic
            if not assignable(sym.type, param.schema, types):
                out.append(diag("E107", ppath, span, "parameter type mismatch",
                                f"variable {sym.name} of type {type_to_text(sym.type)} is not assignable to "
                                f"parameter {key!r} of API {name}, which expects {type_to_text(param.schema)}"))
                continue
            if sym.has_value:
                out.extend(validate_value(sym.value, param.schema, types, ppath, span))
    return out


# --------------------------------------------------------------------------
# Orchestration


@dataclass(frozen=True)
class LintOptions:
    worker_parser: Callable | None = None
    check_apis: bool = True
    check_globals: bool = True
    max_errors: int | None = None
    source_name: str = "<source>"
    check_types: bool = True


@dataclass(frozen=True)
class LintReport:
    diagnostics: list[Diagnostic]
    symbols: SymbolTable
    var_descriptions: list[dict[str, Any]]
    ast_json: str
    types: dict[str, TypeSchema] = field(default_factory=dict)
    source_name: str = "<source>"

    def variables_obj(self) -> dict[str, Any]:
        """Content of the variable description file."""
        return {"variables": list(self.var_descriptions)}

    def types_obj(self) -> dict[str, Any]:
        """Content of the type information file."""
        return type_info_obj(self.types)


def lint(source: str, background: Background | None = None, options: LintOptions | None = None) -> LintReport:
    """Run the full pipeline. Malformed CNL-P never raises; it only yields diagnostics.

    Without a background, API, undeclared-name and unknown-type checks are skipped.
    """
    options = options or LintOptions()
    if background is None:
        background = Background()
        options = replace(options, check_apis=False, check_globals=False, check_types=False)
    outcome = parse_document(source, worker_parser=options.worker_parser)
    diags = list(outcome.diagnostics)
    types, d = lower_types(outcome.document.types, background, check_names=options.check_types)
    diags += d
    ast_json = to_ast_json(outcome.document)
    ast = json.loads(ast_json)
    decls = collect_declarations(ast)
    symbols, records, d = check_declarations(
        decls, ast["variables"], background, types, spans=ast["spans"], check_apis=options.check_apis,
        check_types=options.check_types,
    )
    diags += d
    diags += check_references(ast, symbols, check_globals=options.check_globals)
    if options.check_apis:
        diags += check_api_calls(ast, background, symbols, types)
    diags = sort_diagnostics(diags)
    if options.max_errors is not None:
        diags = diags[: options.max_errors]
    return LintReport(diags, symbols, records, ast_json, types, options.source_name)

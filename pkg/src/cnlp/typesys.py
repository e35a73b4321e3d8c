"""Structural type schemas, background data, value validation and assignability."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping

from .diagnostics import Diagnostic, diag
from .model import (
    BASE_TYPES,
    VAR_NAME_RE,
    Base,
    FormatError,
    ListOf,
    Named,
    ObjectType,
    OneOf,
    OptionalOf,
    Span,
    TypeDefNode,
    TypeExpr,
    literal_equal,
    literal_kind,
    type_from_json,
    type_to_json,
    type_to_text,
)

__all__ = [
    "TypeSchema",
    "ApiParam",
    "ApiSchema",
    "GlobalVar",
    "Background",
    "BackgroundError",
    "BUILTINS",
    "lower_types",
    "load_background",
    "background_from_obj",
    "type_info_obj",
    "validate_value",
    "assignable",
    "resolve",
    "named_refs",
]


@dataclass(frozen=True)
class TypeSchema:
    name: str
    body: TypeExpr
    temporary: bool = False


BUILTINS: dict[str, TypeSchema] = {k: TypeSchema(k, Base(k)) for k in BASE_TYPES}


@dataclass(frozen=True)
class ApiParam:
    schema: TypeExpr
    required: bool = True


@dataclass(frozen=True)
class ApiSchema:
    name: str
    params: dict[str, ApiParam]
    returns: str | None = None


@dataclass(frozen=True)
class GlobalVar:
    name: str
    type: TypeExpr
    value: Any = None
    has_value: bool = False


@dataclass(frozen=True)
class Background:
    apis: dict[str, ApiSchema] = field(default_factory=dict)
    globals: dict[str, GlobalVar] = field(default_factory=dict)
    types: dict[str, TypeSchema] = field(default_factory=dict)


class BackgroundError(FormatError):
    """Background file is unreadable as JSON or violates the expected layout.

    ``code`` is ``"E103"`` when the problem is an unresolvable type name.
    """

    def __init__(self, message: str, path: str = "", code: str | None = None) -> None:
        super().__init__(message, path)
        self.code = code


# --------------------------------------------------------------------------
# Helpers over type expressions


def named_refs(t: TypeExpr) -> Iterator[str]:
    if isinstance(t, Named):
        yield t.name
    elif isinstance(t, ListOf):
        yield from named_refs(t.item)
    elif isinstance(t, OptionalOf):
        yield from named_refs(t.inner)
    elif isinstance(t, ObjectType):
        for sub in t.fields.values():
            yield from named_refs(sub)


def resolve(t: TypeExpr, types: Mapping[str, TypeSchema]) -> TypeExpr | None:
    """Follow Named links to a structural body; None when a name is unknown."""
    seen = set()
    while isinstance(t, Named):
        if t.name in seen or t.name not in types:
            return None
        seen.add(t.name)
        t = types[t.name].body
    return t


def _find_cycles(bodies: Mapping[str, TypeExpr]) -> list[list[str]]:
    """Cycles among Named references, each reported once starting at its first-defined member."""
    order = {name: i for i, name in enumerate(bodies)}
    edges = {name: [r for r in named_refs(body) if r in bodies] for name, body in bodies.items()}
    cycles: list[list[str]] = []
    on_cycle: set[str] = set()
    for start in bodies:
        if start in on_cycle:
            continue
        stack: list[tuple[str, Iterator[str]]] = [(start, iter(edges[start]))]
        path = [start]
        visited = {start}
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                continue
            if nxt == start:
                cyc = list(path)
                if min(cyc, key=order.__getitem__) == start and not on_cycle.intersection(cyc):
                    cycles.append(cyc)
                    on_cycle.update(cyc)
                continue
            if nxt not in visited:
                visited.add(nxt)
                path.append(nxt)
                stack.append((nxt, iter(edges[nxt])))
    return cycles


# --------------------------------------------------------------------------
# Lowering


def lower_types(
    defs: Mapping[str, TypeDefNode], background: Background | None = None, *, check_names: bool = True
) -> tuple[dict[str, TypeSchema], list[Diagnostic]]:
    """Turn document type definitions into temporary object schemas.

    The result is the merged view: builtins, background types, then document types.
    ``check_names=False`` skips unknown-name reports when no type source is loaded.
    """
    background = background or Background()
    diags: list[Diagnostic] = []
    merged: dict[str, TypeSchema] = dict(BUILTINS)
    merged.update(background.types)
    local: dict[str, TypeSchema] = {}
    for name, tdef in defs.items():
        body = ObjectType({f: fn.type for f, fn in tdef.fields.items()})
        if name in background.types:
            if background.types[name].body != body:
                diags.append(diag("E004", f"types.{name}", tdef.span, "type conflicts with background",
                                  f"{name} is already defined by background data with a different shape"))
            continue
        local[name] = TypeSchema(name, body, temporary=True)

    known = set(merged) | set(local)
    for name, tdef in defs.items():
        if name not in local:
            continue
        for fname, fnode in tdef.fields.items():
            for ref in named_refs(fnode.type):
                if check_names and ref not in known:
                    diags.append(diag("E103", f"types.{name}.{fname}", fnode.span, "unknown type name",
                                      f"{name}.{fname} refers to undefined type {ref}"))

    bodies = {**{n: s.body for n, s in background.types.items()}, **{n: s.body for n, s in local.items()}}
    for cyc in _find_cycles(bodies):
        head = cyc[0]
        if head in local:
            diags.append(diag("E103", f"types.{head}", defs[head].span, "cyclic type",
                              "cyclic type: " + " -> ".join(cyc + [head])))
        for name in cyc:
            local.pop(name, None)
    merged.update(local)
    return merged, diags


def type_info_obj(types: Mapping[str, TypeSchema]) -> dict[str, Any]:
    """The type information file: every non-builtin schema with its temporary flag."""
    return {
        "types": {
            name: {"schema": type_to_json(s.body), "temporary": s.temporary}
            for name, s in types.items()
            if name not in BUILTINS
        }
    }


# --------------------------------------------------------------------------
# Background loading


class _Pairs(list):
    """Marks a decoded JSON object so duplicate keys can be reported with their location."""


def _strict_loads(text: str, where: str) -> Any:
    try:
        raw = json.loads(text, object_pairs_hook=_Pairs)
    except json.JSONDecodeError as exc:
        raise BackgroundError(f"{where}: invalid JSON: {exc}") from exc
    return _undupe(raw, "")


def _undupe(node: Any, pointer: str) -> Any:
    if isinstance(node, _Pairs):
        out = {}
        for key, val in node:
            sub = f"{pointer}/{key}"
            if key in out:
                raise BackgroundError("duplicate key", sub)
            out[key] = _undupe(val, sub)
        return out
    if isinstance(node, list):
        return [_undupe(v, f"{pointer}/{i}") for i, v in enumerate(node)]
    return node


def _type_at(data: Any, pointer: str) -> TypeExpr:
    try:
        return type_from_json(data, pointer)
    except BackgroundError:
        raise
    except FormatError as exc:
        raise BackgroundError(exc.message, exc.path) from exc


def _check_refs(t: TypeExpr, known: set[str], pointer: str) -> None:
    for ref in named_refs(t):
        if ref not in known:
            raise BackgroundError(f"unknown type name {ref!r}", pointer, code="E103")


def background_from_obj(
    apis: Mapping[str, Any] | None = None,
    globals_: Mapping[str, Any] | None = None,
    types: Mapping[str, Any] | None = None,
) -> Background:
    """Build a Background from already-decoded JSON documents.

    ``apis`` may carry a ``"types"`` map in the type-information-file shape;
    it is merged with ``types``. API parameter types may name types that only
    the linted document defines, so they are resolved at lint time.
    """
    for label, doc, allowed in (("apis", apis, {"apis", "types"}), ("globals", globals_, {"globals"}),
                                ("types", types, {"types"})):
        if doc:
            extra = set(doc) - allowed
            if extra:
                raise BackgroundError(f"unexpected top-level key(s) {sorted(extra)} in {label} file", "")
    schemas: dict[str, TypeSchema] = {}
    for label, doc in (("types", types), ("apis", apis)):
        if not doc:
            continue
        tmap = doc.get("types", {}) if isinstance(doc, Mapping) else None
        if not isinstance(tmap, Mapping):
            raise BackgroundError("\"types\" must be an object", f"/{label}/types")
        for name, entry in tmap.items():
            ptr = f"/types/{name}"
            if name in schemas:
                raise BackgroundError("type defined twice", ptr)
            if isinstance(entry, Mapping) and "schema" in entry:
                body = _type_at(entry["schema"], f"{ptr}/schema")
            else:
                body = _type_at(entry, ptr)
            schemas[name] = TypeSchema(name, body, temporary=False)
    known = set(schemas) | set(BASE_TYPES)
    for name, schema in schemas.items():
        _check_refs(schema.body, known, f"/types/{name}")

    api_map: dict[str, ApiSchema] = {}
    if apis:
        entries = apis.get("apis", {})
        if not isinstance(entries, Mapping):
            raise BackgroundError("\"apis\" must be an object", "/apis")
        for name, entry in entries.items():
            ptr = f"/apis/{name}"
            if not isinstance(entry, Mapping):
                raise BackgroundError("API entry must be an object", ptr)
            extra = set(entry) - {"params", "returns"}
            if extra:
                raise BackgroundError(f"unexpected key(s) {sorted(extra)}", ptr)
            params_obj = entry.get("params", {})
            if not isinstance(params_obj, Mapping):
                raise BackgroundError("params must be an object", f"{ptr}/params")
            params = {}
            for key, p in params_obj.items():
                pptr = f"{ptr}/params/{key}"
                if not isinstance(p, Mapping) or "type" not in p:
                    raise BackgroundError("parameter needs a \"type\"", pptr)
                required = p.get("required", True)
                if not isinstance(required, bool):
                    raise BackgroundError("required must be a boolean", f"{pptr}/required")
                params[key] = ApiParam(_type_at(p["type"], f"{pptr}/type"), required)
            returns = entry.get("returns")
            if returns is not None:
                if not isinstance(returns, str):
                    raise BackgroundError("returns must be a type name", f"{ptr}/returns")
                if returns not in known:
                    raise BackgroundError(f"unknown type name {returns!r}", f"{ptr}/returns", code="E103")
            api_map[name] = ApiSchema(name, params, returns)

    global_map: dict[str, GlobalVar] = {}
    if globals_:
        entries = globals_.get("globals", {})
        if not isinstance(entries, Mapping):
            raise BackgroundError("\"globals\" must be an object", "/globals")
        for name, entry in entries.items():
            ptr = f"/globals/{name}"
            if not VAR_NAME_RE.match(name):
                raise BackgroundError("global names must match _[a-z0-9_]+", ptr)
            if not isinstance(entry, Mapping) or "type" not in entry:
                raise BackgroundError("global needs a \"type\"", ptr)
            raw_type = entry["type"]
            if isinstance(raw_type, str) and raw_type not in BASE_TYPES:
                gtype: TypeExpr = Named(raw_type)
            else:
                gtype = _type_at(raw_type, f"{ptr}/type")
            _check_refs(gtype, known, f"{ptr}/type")
            global_map[name] = GlobalVar(name, gtype, entry.get("value"), "value" in entry)

    return Background(api_map, global_map, schemas)


def _read_json(path: str | os.PathLike[str]) -> Any:
    with open(path, encoding="utf-8") as fh:
        return _strict_loads(fh.read(), os.fspath(path))


def load_background(
    api_file: str | os.PathLike[str] | None,
    globals_file: str | os.PathLike[str] | None,
    types_file: str | os.PathLike[str] | None = None,
) -> Background:
    """Load background data; OSError propagates, layout problems raise BackgroundError."""
    apis = _read_json(api_file) if api_file else None
    globals_ = _read_json(globals_file) if globals_file else None
    types = _read_json(types_file) if types_file else None
    for label, doc in (("apis", apis), ("globals", globals_), ("types", types)):
        if doc is not None and not isinstance(doc, dict):
            raise BackgroundError(f"{label} file must hold a JSON object", "")
    return background_from_obj(apis, globals_, types)


# --------------------------------------------------------------------------
# Validation


def _join(at: str, key: str | int) -> str:
    return f"{at}.{key}" if at else str(key)


def _render_values(values: tuple[Any, ...]) -> str:
    return json.dumps(list(values), separators=(",", ":"), ensure_ascii=False)


def validate_value(
    value: Any,
    schema: TypeExpr,
    types: Mapping[str, TypeSchema],
    at: str = "",
    span: Span = Span.point(),
) -> list[Diagnostic]:
    """Check a JSON-like value against a schema body; empty list means valid.

    Violation paths extend ``at`` with dotted field names and list indices.
    """
    out: list[Diagnostic] = []
    _validate(value, schema, types, at, span, out, frozenset())
    return out


def _shown(value: Any) -> str:
    return json.dumps(value, ensure_ascii=False, default=repr)


def _validate(value: Any, schema: TypeExpr, types: Mapping[str, TypeSchema], at: str,
              span: Span, out: list[Diagnostic], expanding: frozenset[str]) -> None:
    where = at or "<value>"
    if isinstance(schema, Named):
        if schema.name not in types:
            out.append(diag("E103", where, span, "unknown type name", f"type {schema.name} is not defined"))
            return
        if schema.name in expanding:
            out.append(diag("E103", where, span, "cyclic type", f"type {schema.name} refers to itself"))
            return
        _validate(value, types[schema.name].body, types, at, span, out, expanding | {schema.name})
        return
    if isinstance(schema, OptionalOf):
        if value is not None:
            _validate(value, schema.inner, types, at, span, out, expanding)
        return
    if isinstance(schema, Base):
        if literal_kind(value) != schema.kind:
            out.append(diag("E107", where, span, "type mismatch",
                            f"value {_shown(value)} at {where} is not of type {schema.kind}"))
        return
    if isinstance(schema, OneOf):
        if not any(literal_equal(value, v) for v in schema.values):
            out.append(diag("E108", where, span, "enum value out of range",
                            f"value {_shown(value)} at {where} is not one of {_render_values(schema.values)}"))
        return
    if isinstance(schema, ListOf):
        if not isinstance(value, list):
            out.append(diag("E107", where, span, "type mismatch",
                            f"value {_shown(value)} at {where} is not a list"))
            return
        for i, item in enumerate(value):
            _validate(item, schema.item, types, _join(at, i), span, out, expanding)
        return
    if isinstance(schema, ObjectType):
        if not isinstance(value, dict):
            out.append(diag("E107", where, span, "type mismatch",
                            f"value {_shown(value)} at {where} is not an object"))
            return
        for fname, ftype in schema.fields.items():
            sub = _join(at, fname)
            if fname not in value:
                if not isinstance(ftype, OptionalOf):
                    out.append(diag("E105", sub, span, "missing required field",
                                    f"field {fname!r} of type {type_to_text(ftype)} is required"))
                continue
            _validate(value[fname], ftype, types, sub, span, out, expanding)
        for fname in value:
            if fname not in schema.fields:
                out.append(diag("E106", _join(at, fname), span, "unexpected field",
                                f"field {fname!r} is not part of the schema"))
        return
    raise TypeError(f"not a schema body: {schema!r}")


# --------------------------------------------------------------------------
# Assignability


def assignable(src: TypeExpr, dst: TypeExpr, types: Mapping[str, TypeSchema]) -> bool:
    """True iff every value of ``src`` validates against ``dst``.

    Named types compare by name when both sides are named, otherwise the named
    side is expanded. Unknown names are never assignable.
    """
    return _assignable(src, dst, types, frozenset())


def _values_of_base(kind: str) -> tuple[Any, ...] | None:
    return (True, False) if kind == "boolean" else None


def _assignable(src: TypeExpr, dst: TypeExpr, types: Mapping[str, TypeSchema],
                seen: frozenset[tuple[str, str]]) -> bool:
    if isinstance(src, Named) and isinstance(dst, Named):
        if src.name == dst.name:
            return src.name in types
        key = (src.name, dst.name)
        if key in seen:
            return False
        seen = seen | {key}
    if isinstance(dst, Named):
        if dst.name not in types:
            return False
        if isinstance(src, Named):
            # Nominal: distinct names are unrelated unless src unfolds to an enum or alias.
            body = resolve(src, types)
            if body is None or isinstance(body, ObjectType):
                return False
            return _assignable(body, dst, types, seen)
        return _assignable(src, types[dst.name].body, types, seen)
    if isinstance(src, Named):
        body = resolve(src, types)
        if body is None:
            return False
        return _assignable(body, dst, types, seen)

    if isinstance(dst, OptionalOf):
        if isinstance(src, OptionalOf):
            return _assignable(src.inner, dst.inner, types, seen)
        return _assignable(src, dst.inner, types, seen)
    if isinstance(src, OptionalOf):
        return False

    if isinstance(src, Base):
        if isinstance(dst, Base):
            return src.kind == dst.kind
        if isinstance(dst, OneOf):
            values = _values_of_base(src.kind)
            return values is not None and all(any(literal_equal(v, d) for d in dst.values) for v in values)
        return False
    if isinstance(src, OneOf):
        if isinstance(dst, Base):
            return all(literal_kind(v) == dst.kind for v in src.values)
        if isinstance(dst, OneOf):
            return all(any(literal_equal(v, d) for d in dst.values) for v in src.values)
        return False
    if isinstance(src, ListOf):
        return isinstance(dst, ListOf) and _assignable(src.item, dst.item, types, seen)
    if isinstance(src, ObjectType):
        if not isinstance(dst, ObjectType):
            return False
        if set(src.fields) - set(dst.fields):
            return False
        for fname, dtype in dst.fields.items():
            if fname in src.fields:
                if not _assignable(src.fields[fname], dtype, types, seen):
                    return False
            elif not isinstance(dtype, OptionalOf):
                return False
        return True
    return False

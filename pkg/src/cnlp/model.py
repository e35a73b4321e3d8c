"""CNL-P document tree, JSON paths and the AST_Like JSON codec.

The JSON body mirrors the document structure; source locations live in a
parallel ``"spans"`` map keyed by JSON path so the semantic body stays clean.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence, Union

__all__ = [
    "Span",
    "Base",
    "Named",
    "ListOf",
    "OneOf",
    "OptionalOf",
    "ObjectType",
    "TypeExpr",
    "Literal",
    "VarRef",
    "Arg",
    "Response",
    "GeneralCommand",
    "CallApi",
    "RequestInput",
    "Display",
    "IfBlock",
    "Command",
    "StepNode",
    "WorkerNode",
    "PersonaNode",
    "ConstraintNode",
    "FieldNode",
    "TypeDefNode",
    "VariableDeclNode",
    "AstDocument",
    "FormatError",
    "BASE_TYPES",
    "VAR_NAME_RE",
    "literal_kind",
    "literal_equal",
    "type_to_json",
    "type_from_json",
    "type_to_text",
    "json_path_of",
    "command_path",
    "iter_nodes",
    "to_ast_json",
    "to_ast_obj",
    "from_ast_json",
    "from_ast_obj",
    "worker_to_obj",
    "worker_from_obj",
]

BASE_TYPES = ("text", "number", "boolean")
VAR_NAME_RE = re.compile(r"_[a-z0-9_]+\Z")
TYPE_NAME_RE = re.compile(r"[A-Z][A-Za-z0-9_]*\Z")
COMMAND_KINDS = ("general", "call_api", "request_input", "display", "if_block")

LiteralValue = Union[str, int, float, bool]


class FormatError(ValueError):
    """Malformed AST_Like or background JSON; ``path`` names the offending spot."""

    def __init__(self, message: str, path: str = "") -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


@dataclass(frozen=True, order=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    def __post_init__(self) -> None:
        if min(self.line, self.col, self.end_line, self.end_col) < 1:
            raise ValueError(f"span components must be >= 1: {self}")
        if (self.line, self.col) > (self.end_line, self.end_col):
            raise ValueError(f"span start after end: {self}")

    def to_list(self) -> list[int]:
        return [self.line, self.col, self.end_line, self.end_col]

    @classmethod
    def from_list(cls, data: Sequence[int]) -> Span:
        return cls(*(int(x) for x in data))

    @classmethod
    def point(cls, line: int = 1, col: int = 1) -> Span:
        return cls(line, col, line, col)


NOWHERE = Span.point()


# --------------------------------------------------------------------------
# Type expressions


@dataclass(frozen=True)
class Base:
    kind: str  # one of BASE_TYPES


@dataclass(frozen=True)
class Named:
    name: str


@dataclass(frozen=True)
class ListOf:
    item: TypeExpr


@dataclass(frozen=True)
class OneOf:
    values: tuple[LiteralValue, ...]


@dataclass(frozen=True)
class OptionalOf:
    inner: TypeExpr


@dataclass(frozen=True)
class ObjectType:
    """Structural record; only produced by type lowering and background data."""

    fields: dict[str, TypeExpr]


TypeExpr = Union[Base, Named, ListOf, OneOf, OptionalOf, ObjectType]


def literal_kind(value: Any) -> str | None:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "text"
    return None


def literal_equal(a: Any, b: Any) -> bool:
    """Kind-aware equality: ``1 == 1.0`` but ``True != 1``."""
    ka, kb = literal_kind(a), literal_kind(b)
    return ka is not None and ka == kb and a == b


def type_to_json(t: TypeExpr) -> Any:
    if isinstance(t, Base):
        return t.kind
    if isinstance(t, Named):
        return {"named": t.name}
    if isinstance(t, ListOf):
        return {"list": type_to_json(t.item)}
    if isinstance(t, OneOf):
        return {"one_of": list(t.values)}
    if isinstance(t, OptionalOf):
        return {"optional": type_to_json(t.inner)}
    if isinstance(t, ObjectType):
        return {"object": {k: type_to_json(v) for k, v in t.fields.items()}}
    raise TypeError(f"not a type expression: {t!r}")


def type_from_json(data: Any, path: str = "") -> TypeExpr:
    if isinstance(data, str):
        if data in BASE_TYPES:
            return Base(data)
        raise FormatError(f"unknown base type {data!r}", path)
    if not isinstance(data, dict) or len(data) != 1:
        raise FormatError("type must be a base name or a one-key object", path)
    ((key, val),) = data.items()
    sub = f"{path}/{key}"
    if key == "named":
        if not isinstance(val, str) or not val:
            raise FormatError("named type needs a name", sub)
        return Named(val)
    if key == "list":
        return ListOf(type_from_json(val, sub))
    if key == "optional":
        inner = type_from_json(val, sub)
        if isinstance(inner, OptionalOf):
            raise FormatError("optional may not wrap optional", sub)
        return OptionalOf(inner)
    if key == "one_of":
        if not isinstance(val, list) or not val:
            raise FormatError("one_of needs a nonempty list", sub)
        kinds = {literal_kind(v) for v in val}
        if None in kinds or len(kinds) != 1:
            raise FormatError("one_of literals must share one base kind", sub)
        return OneOf(tuple(val))
    if key == "object":
        if not isinstance(val, dict):
            raise FormatError("object needs a field map", sub)
        return ObjectType({k: type_from_json(v, f"{sub}/{k}") for k, v in val.items()})
    raise FormatError(f"unknown type constructor {key!r}", path)


def _literal_text(value: LiteralValue) -> str:
    return json.dumps(value)


def type_to_text(t: TypeExpr) -> str:
    """Render in CNL-P surface syntax (used in messages)."""
    if isinstance(t, Base):
        return t.kind
    if isinstance(t, Named):
        return t.name
    if isinstance(t, ListOf):
        return f"list of {type_to_text(t.item)}"
    if isinstance(t, OneOf):
        return "one of [" + ", ".join(_literal_text(v) for v in t.values) + "]"
    if isinstance(t, OptionalOf):
        return f"{type_to_text(t.inner)} (optional)"
    if isinstance(t, ObjectType):
        return "{" + ", ".join(f"{k}: {type_to_text(v)}" for k, v in t.fields.items()) + "}"
    raise TypeError(f"not a type expression: {t!r}")


# --------------------------------------------------------------------------
# Document nodes. Spans are excluded from equality; they round-trip separately.


@dataclass(frozen=True)
class Literal:
    value: LiteralValue


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class Arg:
    value: Literal | VarRef
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class Response:
    name: str
    var_type: str | None = None
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class GeneralCommand:
    text: str
    span: Span = field(default=NOWHERE, compare=False)
    kind = "general"


@dataclass(frozen=True)
class CallApi:
    api: str
    paras: dict[str, Arg]
    response: Response | None = None
    span: Span = field(default=NOWHERE, compare=False)
    kind = "call_api"


@dataclass(frozen=True)
class RequestInput:
    var: str
    type: TypeExpr
    prompt: str
    span: Span = field(default=NOWHERE, compare=False)
    kind = "request_input"


@dataclass(frozen=True)
class Display:
    template: str
    span: Span = field(default=NOWHERE, compare=False)
    kind = "display"


@dataclass(frozen=True)
class IfBlock:
    condition: str
    then: tuple[Command, ...]
    else_: tuple[Command, ...] = ()
    span: Span = field(default=NOWHERE, compare=False)
    kind = "if_block"


Command = Union[GeneralCommand, CallApi, RequestInput, Display, IfBlock]


@dataclass(frozen=True)
class StepNode:
    number: int
    commands: tuple[Command, ...]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class WorkerNode:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    main_flow: tuple[StepNode, ...]
    span: Span = field(default=NOWHERE, compare=False)
    inputs_span: Span = field(default=NOWHERE, compare=False)
    outputs_span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class PersonaNode:
    role: str
    attributes: dict[str, str]
    span: Span = field(default=NOWHERE, compare=False)
    role_span: Span = field(default=NOWHERE, compare=False)
    attribute_spans: dict[str, Span] = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class ConstraintNode:
    name: str
    text: str
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class FieldNode:
    name: str
    type: TypeExpr
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class TypeDefNode:
    name: str
    fields: dict[str, FieldNode]
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class VariableDeclNode:
    name: str
    type: TypeExpr
    initial: LiteralValue | None = None
    origin: str = "section"
    span: Span = field(default=NOWHERE, compare=False)


@dataclass(frozen=True)
class AstDocument:
    agent_name: str
    persona: PersonaNode | None = None
    constraints: tuple[ConstraintNode, ...] = ()
    types: dict[str, TypeDefNode] = field(default_factory=dict)
    variables: dict[str, VariableDeclNode] = field(default_factory=dict)
    worker: WorkerNode | None = None
    span: Span = field(default=NOWHERE, compare=False)


# --------------------------------------------------------------------------
# JSON paths


def json_path_of(address: Sequence[str | tuple[str, int]]) -> str:
    """Render a structural address as a dotted JSON path.

    Segments are plain keys or ``("step", n)`` / ``("command", k)`` pairs:

    >>> json_path_of(["worker", "main_flow", ("step", 2), ("command", 1), "paras", "preference"])
    'worker.main_flow.step_2.command1.paras.preference'
    """
    parts = []
    for seg in address:
        if isinstance(seg, tuple):
            tag, n = seg
            if tag == "step":
                parts.append(f"step_{n}")
            elif tag == "command":
                parts.append(f"command{n}")
            else:
                raise ValueError(f"unknown address segment {seg!r}")
        else:
            parts.append(seg)
    return ".".join(parts)


def command_path(step: int, *indices: int | str) -> str:
    """Path of a command; ``indices`` alternates command numbers and branch names.

    ``command_path(4, 1, "then", 2)`` -> ``worker.main_flow.step_4.command1.then.command2``
    """
    address: list[str | tuple[str, int]] = ["worker", "main_flow", ("step", step)]
    for idx in indices:
        address.append(("command", idx) if isinstance(idx, int) else idx)
    return json_path_of(address)


def _iter_commands(
    commands: Sequence[Command], prefix: str
) -> Iterator[tuple[str, Any, Span]]:
    for k, cmd in enumerate(commands, 1):
        path = f"{prefix}.command{k}"
        yield path, cmd, cmd.span
        if isinstance(cmd, CallApi):
            for key, arg in cmd.paras.items():
                yield f"{path}.paras.{key}", arg, arg.span
            if cmd.response is not None:
                yield f"{path}.response", cmd.response, cmd.response.span
        elif isinstance(cmd, IfBlock):
            yield from _iter_commands(cmd.then, f"{path}.then")
            yield from _iter_commands(cmd.else_, f"{path}.else")


def iter_nodes(doc: AstDocument) -> Iterator[tuple[str, Any, Span]]:
    """Yield ``(path, node, span)`` for every located node, in document order."""
    yield "agent", doc, doc.span
    if doc.persona is not None:
        p = doc.persona
        yield "persona", p, p.span
        yield "persona.role", p.role, p.role_span
        for name in p.attributes:
            yield f"persona.attributes.{name}", name, p.attribute_spans.get(name, NOWHERE)
    for c in doc.constraints:
        yield f"constraints.{c.name}", c, c.span
    for tname, tdef in doc.types.items():
        yield f"types.{tname}", tdef, tdef.span
        for fname, fnode in tdef.fields.items():
            yield f"types.{tname}.{fname}", fnode, fnode.span
    for vname, var in doc.variables.items():
        yield f"variables.{vname}", var, var.span
    w = doc.worker
    if w is not None:
        yield "worker", w, w.span
        yield "worker.inputs", w.inputs, w.inputs_span
        yield "worker.outputs", w.outputs, w.outputs_span
        for step in w.main_flow:
            spath = f"worker.main_flow.step_{step.number}"
            yield spath, step, step.span
            yield from _iter_commands(step.commands, spath)


# --------------------------------------------------------------------------
# Serialization


def _arg_to_obj(arg: Arg) -> dict[str, Any]:
    if isinstance(arg.value, VarRef):
        return {"var": arg.value.name}
    return {"literal": arg.value.value}


def _command_to_obj(cmd: Command) -> dict[str, Any]:
    obj: dict[str, Any] = {"type": cmd.kind}
    if isinstance(cmd, GeneralCommand):
        obj["text"] = cmd.text
    elif isinstance(cmd, CallApi):
        obj["api"] = cmd.api
        obj["paras"] = {k: _arg_to_obj(a) for k, a in cmd.paras.items()}
        if cmd.response is not None:
            resp: dict[str, Any] = {"name": cmd.response.name}
            if cmd.response.var_type is not None:
                resp["var_type"] = cmd.response.var_type
            obj["response"] = resp
    elif isinstance(cmd, RequestInput):
        obj["var"] = cmd.var
        obj["var_type"] = type_to_json(cmd.type)
        obj["prompt"] = cmd.prompt
    elif isinstance(cmd, Display):
        obj["template"] = cmd.template
    elif isinstance(cmd, IfBlock):
        obj["condition"] = cmd.condition
        obj["then"] = _commands_to_obj(cmd.then)
        obj["else"] = _commands_to_obj(cmd.else_)
    return obj


def _commands_to_obj(commands: Sequence[Command]) -> dict[str, Any]:
    return {f"command{k}": _command_to_obj(c) for k, c in enumerate(commands, 1)}


def worker_to_obj(worker: WorkerNode) -> dict[str, Any]:
    return {
        "name": worker.name,
        "inputs": list(worker.inputs),
        "outputs": list(worker.outputs),
        "main_flow": {
            f"step_{s.number}": _commands_to_obj(s.commands) for s in worker.main_flow
        },
    }


def to_ast_obj(doc: AstDocument) -> dict[str, Any]:
    obj: dict[str, Any] = {"agent": doc.agent_name}
    if doc.persona is not None:
        obj["persona"] = {"role": doc.persona.role, "attributes": dict(doc.persona.attributes)}
    obj["constraints"] = {c.name: c.text for c in doc.constraints}
    obj["types"] = {
        name: {f: type_to_json(fn.type) for f, fn in t.fields.items()}
        for name, t in doc.types.items()
    }
    variables = {}
    for name, var in doc.variables.items():
        entry: dict[str, Any] = {"type": type_to_json(var.type), "origin": var.origin}
        if var.initial is not None:
            entry["initial"] = var.initial
        variables[name] = entry
    obj["variables"] = variables
    if doc.worker is not None:
        obj["worker"] = worker_to_obj(doc.worker)
    obj["spans"] = {path: span.to_list() for path, _, span in iter_nodes(doc)}
    return obj


# Raw newlines never occur inside JSON strings, so this only touches indented arrays.
_SPAN_ARRAY_RE = re.compile(r"\[\n *(\d+),\n *(\d+),\n *(\d+),\n *(\d+)\n *\]")


def to_ast_json(doc: AstDocument) -> str:
    """Canonical AST_Like JSON text (deterministic key order, 2-space indent, spans on one line)."""
    text = json.dumps(to_ast_obj(doc), indent=2, ensure_ascii=False)
    return _SPAN_ARRAY_RE.sub(r"[\1, \2, \3, \4]", text) + "\n"


# --------------------------------------------------------------------------
# Deserialization

_TOP_KEYS = ("agent", "persona", "constraints", "types", "variables", "worker", "spans")


def _expect(cond: bool, message: str, path: str) -> None:
    if not cond:
        raise FormatError(message, path)


def _expect_keys(obj: Any, path: str, required: Sequence[str], optional: Sequence[str] = ()) -> None:
    _expect(isinstance(obj, dict), "expected an object", path)
    for key in required:
        _expect(key in obj, f"missing key {key!r}", path)
    extra = set(obj) - set(required) - set(optional)
    _expect(not extra, f"unexpected key(s) {sorted(extra)}", path)


def _is_literal(value: Any) -> bool:
    return literal_kind(value) is not None


class _SpanLookup:
    def __init__(self, spans: dict[str, Any] | None, default: Span = NOWHERE) -> None:
        self.spans = spans or {}
        self.default = default

    def __call__(self, path: str) -> Span:
        raw = self.spans.get(path)
        if raw is None:
            return self.default
        try:
            return Span.from_list(raw)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad span {raw!r}", f"spans.{path}") from exc


def _arg_from_obj(obj: Any, path: str, span: _SpanLookup) -> Arg:
    _expect(isinstance(obj, dict) and len(obj) == 1, "argument must be {literal} or {var}", path)
    ((key, val),) = obj.items()
    if key == "var":
        _expect(isinstance(val, str) and bool(VAR_NAME_RE.match(val)), f"bad variable name {val!r}", path)
        return Arg(VarRef(val), span(path))
    _expect(key == "literal" and _is_literal(val), "argument must be {literal} or {var}", path)
    return Arg(Literal(val), span(path))


def _command_from_obj(obj: Any, path: str, span: _SpanLookup) -> Command:
    _expect(isinstance(obj, dict), "command must be an object", path)
    _expect("type" in obj, "command lacks \"type\"", path)
    kind = obj["type"]
    _expect(kind in COMMAND_KINDS, f"unknown command type {kind!r}", path)
    if kind != "call_api":
        _expect("paras" not in obj, "\"paras\" is only allowed on call_api commands", path)
        _expect("response" not in obj, "\"response\" is only allowed on call_api commands", path)
    if kind == "general":
        _expect_keys(obj, path, ["type", "text"])
        _expect(isinstance(obj["text"], str), "text must be a string", path)
        return GeneralCommand(obj["text"], span(path))
    if kind == "call_api":
        _expect_keys(obj, path, ["type", "api", "paras"], ["response"])
        _expect(isinstance(obj["api"], str) and bool(obj["api"]), "api must be a name", path)
        paras_obj = obj["paras"]
        _expect(isinstance(paras_obj, dict), "paras must be an object", f"{path}.paras")
        paras = {k: _arg_from_obj(v, f"{path}.paras.{k}", span) for k, v in paras_obj.items()}
        response = None
        if "response" in obj:
            rpath = f"{path}.response"
            _expect_keys(obj["response"], rpath, ["name"], ["var_type"])
            name = obj["response"]["name"]
            _expect(isinstance(name, str) and bool(VAR_NAME_RE.match(name)), f"bad variable name {name!r}", rpath)
            vtype = obj["response"].get("var_type")
            _expect(vtype is None or isinstance(vtype, str), "var_type must be a type name", rpath)
            response = Response(name, vtype, span(rpath))
        return CallApi(obj["api"], paras, response, span(path))
    if kind == "request_input":
        _expect_keys(obj, path, ["type", "var", "var_type", "prompt"])
        _expect(isinstance(obj["var"], str) and bool(VAR_NAME_RE.match(obj["var"])), "bad variable name", path)
        _expect(isinstance(obj["prompt"], str), "prompt must be a string", path)
        return RequestInput(obj["var"], type_from_json(obj["var_type"], f"{path}.var_type"), obj["prompt"], span(path))
    if kind == "display":
        _expect_keys(obj, path, ["type", "template"])
        _expect(isinstance(obj["template"], str), "template must be a string", path)
        return Display(obj["template"], span(path))
    _expect_keys(obj, path, ["type", "condition", "then"], ["else"])
    _expect(isinstance(obj["condition"], str), "condition must be a string", path)
    then = _commands_from_obj(obj["then"], f"{path}.then", span)
    else_ = _commands_from_obj(obj.get("else", {}), f"{path}.else", span)
    return IfBlock(obj["condition"], then, else_, span(path))


def _commands_from_obj(obj: Any, path: str, span: _SpanLookup) -> tuple[Command, ...]:
    _expect(isinstance(obj, dict), "expected an object of commands", path)
    out = []
    for k, (key, cmd) in enumerate(obj.items(), 1):
        _expect(key == f"command{k}", f"expected key 'command{k}', got {key!r}", path)
        out.append(_command_from_obj(cmd, f"{path}.{key}", span))
    return tuple(out)


def worker_from_obj(obj: Any, spans: dict[str, Any] | None = None, default_span: Span = NOWHERE) -> WorkerNode:
    """Rebuild a worker from its AST_Like object, enforcing the command key patterns."""
    span = _SpanLookup(spans, default_span)
    _expect_keys(obj, "worker", ["name", "main_flow"], ["inputs", "outputs"])
    _expect(isinstance(obj["name"], str), "worker name must be a string", "worker")
    io = {}
    for key in ("inputs", "outputs"):
        names = obj.get(key, [])
        _expect(isinstance(names, list) and all(isinstance(n, str) for n in names), "expected a list of names", f"worker.{key}")
        io[key] = tuple(names)
    flow = obj["main_flow"]
    _expect(isinstance(flow, dict), "main_flow must be an object", "worker.main_flow")
    steps = []
    last = 0
    for key, body in flow.items():
        m = re.fullmatch(r"step_([1-9][0-9]*)", key)
        _expect(m is not None, f"bad step key {key!r}", "worker.main_flow")
        number = int(m.group(1))
        _expect(number > last, "step numbers must increase", f"worker.main_flow.{key}")
        last = number
        spath = f"worker.main_flow.{key}"
        steps.append(StepNode(number, _commands_from_obj(body, spath, span), span(spath)))
    return WorkerNode(
        obj["name"], io["inputs"], io["outputs"], tuple(steps),
        span("worker"), span("worker.inputs"), span("worker.outputs"),
    )


def from_ast_obj(obj: Any) -> AstDocument:
    _expect(isinstance(obj, dict), "document must be a JSON object", "")
    for key in obj:
        _expect(key in _TOP_KEYS, f"unknown top-level key {key!r}", key)
    _expect("agent" in obj and isinstance(obj["agent"], str), "missing agent name", "agent")
    spans = obj.get("spans", {})
    _expect(isinstance(spans, dict), "spans must be an object", "spans")
    span = _SpanLookup(spans)

    persona = None
    if "persona" in obj:
        p = obj["persona"]
        _expect_keys(p, "persona", ["role", "attributes"])
        _expect(isinstance(p["role"], str), "role must be a string", "persona.role")
        attrs = p["attributes"]
        _expect(isinstance(attrs, dict) and all(isinstance(v, str) for v in attrs.values()), "attributes must map names to text", "persona.attributes")
        persona = PersonaNode(
            p["role"], dict(attrs), span("persona"), span("persona.role"),
            {k: span(f"persona.attributes.{k}") for k in attrs},
        )

    cons = obj.get("constraints", {})
    _expect(isinstance(cons, dict) and all(isinstance(v, str) for v in cons.values()), "constraints must map names to text", "constraints")
    constraints = tuple(ConstraintNode(k, v, span(f"constraints.{k}")) for k, v in cons.items())

    types_obj = obj.get("types", {})
    _expect(isinstance(types_obj, dict), "types must be an object", "types")
    types = {}
    for tname, fields in types_obj.items():
        tpath = f"types.{tname}"
        _expect(isinstance(fields, dict), "type definition must map fields to types", tpath)
        types[tname] = TypeDefNode(
            tname,
            {f: FieldNode(f, type_from_json(t, f"{tpath}.{f}"), span(f"{tpath}.{f}")) for f, t in fields.items()},
            span(tpath),
        )

    vars_obj = obj.get("variables", {})
    _expect(isinstance(vars_obj, dict), "variables must be an object", "variables")
    variables = {}
    for vname, entry in vars_obj.items():
        vpath = f"variables.{vname}"
        _expect_keys(entry, vpath, ["type", "origin"], ["initial"])
        _expect(entry["origin"] in ("section", "global", "temporary"), "bad origin", vpath)
        initial = entry.get("initial")
        _expect(initial is None or _is_literal(initial), "initial must be a literal", vpath)
        variables[vname] = VariableDeclNode(
            vname, type_from_json(entry["type"], f"{vpath}.type"), initial, entry["origin"], span(vpath)
        )

    worker = worker_from_obj(obj["worker"], spans) if "worker" in obj else None
    return AstDocument(obj["agent"], persona, constraints, types, variables, worker, span("agent"))


def from_ast_json(text: str) -> AstDocument:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from exc
    return from_ast_obj(obj)

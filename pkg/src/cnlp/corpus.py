"""Deterministic error-injection corpus and accuracy/redundancy scoring.

One mutation operator per diagnostic code. Each operator edits source text at
a site found by parsing, and returns the gold ``(path, code)`` it expects the
linter to report. Seeds pick the site and the variant.
"""

from __future__ import annotations

import json
import random
import shutil
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .diagnostics import CODES, SOURCE_PATH, Diagnostic
from .frontend import Section, parse_document, split_lines
from .model import (
    Arg, AstDocument, CallApi, Display, IfBlock, Named, OneOf, OptionalOf, RequestInput, VarRef, iter_nodes, literal_kind,
)
from .semantics import LintReport, lint
from .typesys import Background, BUILTINS, assignable, load_background, lower_types, resolve

__all__ = [
    "GoldAnnotation",
    "CorpusScore",
    "InapplicableMutation",
    "ALL_CODES",
    "DEFAULT_SEEDS",
    "fixture_path",
    "fixture_background",
    "inject_error",
    "inject_errors",
    "generate_corpus",
    "load_corpus",
    "score",
    "score_corpus",
]

ALL_CODES = tuple(CODES)
DEFAULT_SEEDS = (1, 2, 3, 4)


class InapplicableMutation(ValueError):
    """The source offers no site for the requested mutation."""


@dataclass(frozen=True)
class GoldAnnotation:
    instance_id: str
    code: str
    path: str

    def __post_init__(self) -> None:
        if self.code not in CODES:
            raise ValueError(f"unknown diagnostic code {self.code!r}")


@dataclass(frozen=True)
class CorpusScore:
    instances: int
    correct: int
    accuracy: float
    emitted: int
    redundant: int
    redundancy_rate: float

    def to_obj(self) -> dict[str, Any]:
        return asdict(self)


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("cnlp") / "data" / name))


def fixture_background() -> Background:
    return load_background(fixture_path("apis.json"), fixture_path("globals.json"))


# --------------------------------------------------------------------------
# Mutation machinery


@dataclass
class _Ctx:
    lines: list[str]
    doc: AstDocument
    sections: list[Section]
    background: Background
    rng: random.Random
    used: set[tuple]

    def pick(self, sites: Sequence[tuple[tuple, Any]]) -> Any:
        """Choose one site whose claim keys are all still free."""
        free = [payload for keys, payload in sites if not (set(keys) & self.used)]
        if not free:
            raise InapplicableMutation("no free site")
        return self.rng.choice(free)

    def indent_of(self, lineno: int) -> str:
        raw = self.lines[lineno - 1]
        return raw[: len(raw) - len(raw.lstrip())]


@dataclass(frozen=True)
class _Edit:
    lines: list[str]
    path: str
    claims: tuple


def _sections(ctx: _Ctx, kinds: Iterable[str]) -> list[Section]:
    wanted = set(kinds)
    return [s for s in ctx.sections if s.kind in wanted]


def _end_marker_line(ctx: _Ctx, sec: Section) -> int | None:
    """Line of the section's END_* marker, if it is present."""
    line = sec.span.end_line
    if ctx.lines[line - 1].strip() == f"END_{sec.kind.upper()}":
        return line
    return None


def _commands(doc: AstDocument) -> list[tuple[str, Any]]:
    return [(p, n) for p, n, _ in iter_nodes(doc) if isinstance(n, (CallApi, Display, RequestInput, IfBlock))]


def _calls(doc: AstDocument) -> list[tuple[str, CallApi]]:
    return [(p, n) for p, n in _commands(doc) if isinstance(n, CallApi)]


def _replace_span(ctx: _Ctx, span, old: str, new: str) -> list[str]:
    lines = list(ctx.lines)
    raw = lines[span.line - 1]
    lo, hi = span.col - 1, span.end_col - 1
    chunk = raw[lo:hi]
    if old not in chunk:
        raise InapplicableMutation(f"{old!r} not found at line {span.line}")
    lines[span.line - 1] = raw[:lo] + chunk.replace(old, new, 1) + raw[hi:]
    return lines


def _arg_value_text(ctx: _Ctx, arg: Arg) -> str:
    raw = ctx.lines[arg.span.line - 1][arg.span.col - 1: arg.span.end_col - 1]
    return raw.split("=", 1)[1].strip()


def _types(ctx: _Ctx):
    types, _ = lower_types(ctx.doc.types, ctx.background)
    return types


def _mut_e001(ctx: _Ctx) -> _Edit:
    sites = []
    for sec in _sections(ctx, ("persona", "constraints", "types", "variables", "worker")):
        end = _end_marker_line(ctx, sec)
        if end is not None:
            for name in ("NOTES", "EXAMPLES", "GUARDRAIL", "SCENARIOS"):
                sites.append(((("top",), ("section", sec.kind)), (end, name, sec.kind)))
    end, name, kind = ctx.pick(sites)
    block = ["", f"DEFINE_{name}:", "    Additional guidance for the agent.", f"END_{name}"]
    lines = ctx.lines[:end] + block + ctx.lines[end:]
    return _Edit(lines, SOURCE_PATH, (("top",), ("section", kind)))


def _mut_e002(ctx: _Ctx) -> _Edit:
    sites = []
    for sec in _sections(ctx, ("persona", "constraints", "types", "variables", "worker")):
        end = _end_marker_line(ctx, sec)
        if end is not None:
            claims = (("section", sec.kind),) + ((("worker-end",),) if sec.kind == "worker" else ())
            sites.append((claims, (end, sec.kind, claims)))
    footer = [s for s in ctx.sections if s.kind == "agent_footer"]
    if footer:
        claims = (("agent-end",), ("worker-end",))
        sites.append((claims, (footer[0].span.line, SOURCE_PATH, claims)))
    for path, node in _commands(ctx.doc):
        if isinstance(node, IfBlock) and ctx.lines[node.span.end_line - 1].strip() == "END_IF":
            claims = ((path,), ("worker-end",))
            sites.append((claims, (node.span.end_line, path, claims)))
    line, path, claims = ctx.pick(sites)
    return _Edit(ctx.lines[: line - 1] + ctx.lines[line:], path, claims)


_MALFORMED_ATTR = ("always double check the advice", "keep answers short", "respond in plain language",
                   "safety only share verified tips")


def _mut_e003(ctx: _Ctx) -> _Edit:
    sites = []
    doc = ctx.doc
    anchors: list[tuple[str, int]] = []
    if doc.persona is not None:
        anchors += [("persona", s.line) for s in [doc.persona.role_span, *doc.persona.attribute_spans.values()]]
    anchors += [("constraints", c.span.line) for c in doc.constraints]
    for kind, line in anchors:
        for text in _MALFORMED_ATTR:
            sites.append(((("attr", kind),), (kind, line, text)))
    kind, line, text = ctx.pick(sites)
    new = ctx.indent_of(line) + text
    return _Edit(ctx.lines[:line] + [new] + ctx.lines[line:], kind, (("attr", kind),))


_BAD_TYPE_EXPRS = ("lst of number", "one of []", "numbr", "list of", 'one of [1, "a"]', "text (optional) (optional)")


def _mut_e004(ctx: _Ctx) -> _Edit:
    sites = []
    for name, tdef in ctx.doc.types.items():
        for bad in _BAD_TYPE_EXPRS:
            sites.append(((("type", name),), (name, tdef, bad)))
    name, tdef, bad = ctx.pick(sites)
    first = next(iter(tdef.fields.values()))
    new = ctx.indent_of(first.span.line) + f"extra_field: {bad}"
    line = tdef.span.line
    return _Edit(ctx.lines[:line] + [new] + ctx.lines[line:], f"types.{name}", (("type", name),))


def _mut_e005(ctx: _Ctx) -> _Edit:
    sites = []
    for sec in _sections(ctx, ("persona", "constraints", "types", "variables")):
        end = _end_marker_line(ctx, sec)
        if end is not None:
            sites.append(((("section", sec.kind),), (sec, end)))
    sec, end = ctx.pick(sites)
    block = [""] + ctx.lines[sec.span.line - 1: end]
    return _Edit(ctx.lines[:end] + block + ctx.lines[end:], SOURCE_PATH, (("section", sec.kind),))


_UNDECLARED = ("_undefined_value", "_missing_plan", "_user_profile", "_unknown_input")


def _mut_e101(ctx: _Ctx) -> _Edit:
    sites = []
    for path, node in _commands(ctx.doc):
        if isinstance(node, CallApi):
            for key, arg in node.paras.items():
                if isinstance(arg.value, VarRef):
                    for new in _UNDECLARED:
                        claim = ("arg", path, key)
                        sites.append(((claim,), ("arg", f"{path}.paras.{key}", arg, claim, new)))
        elif isinstance(node, Display) and "{_" in node.template:
            for new in _UNDECLARED:
                sites.append((((path,),), ("display", path, node, (path,), new)))
    kind, gold, node, claim, new = ctx.pick(sites)
    if kind == "arg":
        lines = _replace_span(ctx, node.span, node.value.name, new)
    else:
        old = node.template[node.template.index("{_") + 1: node.template.index("}", node.template.index("{_"))]
        lines = _replace_span(ctx, node.span, "{" + old + "}", "{" + new + "}")
    return _Edit(lines, gold, (claim,))


def _last_step_append(ctx: _Ctx) -> tuple[int, str, str]:
    """Insertion line, command path and indentation for a command appended to the last step."""
    worker = ctx.doc.worker
    if worker is None or not worker.main_flow:
        raise InapplicableMutation("no worker steps")
    step = worker.main_flow[-1]
    if not step.commands:
        raise InapplicableMutation("last step is empty")
    first = step.commands[0]
    return step.span.end_line, f"worker.main_flow.step_{step.number}.command{len(step.commands) + 1}", ctx.indent_of(first.span.line)


def _mut_e102(ctx: _Ctx) -> _Edit:
    doc = ctx.doc
    names = list(ctx.background.globals) + list(doc.variables)
    names += [n.var for _, n in _commands(doc) if isinstance(n, RequestInput)]
    names += [n.response.name for _, n in _calls(doc) if n.response is not None]
    names = list(dict.fromkeys(names))
    if not names:
        raise InapplicableMutation("no declared names")
    sites = [((("worker-end",),), n) for n in names]
    name = ctx.pick(sites)
    line, path, indent = _last_step_append(ctx)
    new = f'{indent}REQUEST_INPUT {name}: text PROMPT "Please enter this value again."'
    return _Edit(ctx.lines[:line] + [new] + ctx.lines[line:], path, (("worker-end",), (path,)))


_UNKNOWN_TYPES = ("UndefinedType", "MissingRecord", "PlanKind", "Intensity")


def _mut_e103(ctx: _Ctx) -> _Edit:
    doc = ctx.doc
    types = _types(ctx)
    unknown = [t for t in _UNKNOWN_TYPES if t not in types]
    sites = []
    for name, tdef in doc.types.items():
        for t in unknown:
            sites.append(((("type", name),), ("field", name, tdef, t)))
    for vname, var in doc.variables.items():
        for t in unknown:
            sites.append(((("var", vname),), ("var", vname, var, t)))
    for path, node in _commands(doc):
        if isinstance(node, RequestInput):
            for t in unknown:
                sites.append((((path,),), ("input", path, node, t)))
        elif isinstance(node, CallApi) and node.response is not None and node.response.var_type:
            for t in unknown:
                sites.append(((("resp", path),), ("response", path, node, t)))
    kind, key, node, t = ctx.pick(sites)
    if kind == "field":
        first = next(iter(node.fields.values()))
        new = ctx.indent_of(first.span.line) + f"extra_ref: {t}"
        line = node.span.line
        return _Edit(ctx.lines[:line] + [new] + ctx.lines[line:], f"types.{key}.extra_ref", (("type", key),))
    if kind == "var":
        raw = ctx.lines[node.span.line - 1]
        head, _, tail = raw.partition(":")
        rest = tail.split("=", 1)
        tail = f" {t}" + (f" ={rest[1]}" if len(rest) > 1 else "")
        lines = list(ctx.lines)
        lines[node.span.line - 1] = f"{head}:{tail}"
        return _Edit(lines, f"variables.{key}", (("var", key),))
    if kind == "input":
        raw = ctx.lines[node.span.line - 1]
        head, _, tail = raw.partition(":")
        _, _, prompt = tail.partition("PROMPT")
        lines = list(ctx.lines)
        lines[node.span.line - 1] = f"{head}: {t} PROMPT{prompt}"
        return _Edit(lines, key, ((key,),))
    lines = _replace_span(ctx, node.response.span, f": {node.response.var_type}", f": {t}")
    return _Edit(lines, key, (("resp", key),))


def _mut_e104(ctx: _Ctx) -> _Edit:
    sites = []
    for path, node in _calls(ctx.doc):
        for suffix in ("_v2", "s", "_legacy", "_plan"):
            new = node.api + suffix
            if new not in ctx.background.apis:
                sites.append(((("api", path), ("api-read", path)), (path, node, new)))
    path, node, new = ctx.pick(sites)
    return _Edit(_replace_span(ctx, node.span, f"CALL {node.api}(", f"CALL {new}("), path, (("api", path),))


def _remove_arg(ctx: _Ctx, call: CallApi, key: str) -> list[str]:
    arg = call.paras[key]
    line = ctx.lines[arg.span.line - 1]
    lo, hi = arg.span.col - 1, arg.span.end_col - 1
    before, after = line[:lo], line[hi:]
    if after.lstrip().startswith(","):
        after = after.lstrip()[1:].lstrip()
    elif before.rstrip().endswith(","):
        before = before.rstrip()[:-1]
    lines = list(ctx.lines)
    lines[arg.span.line - 1] = before + after
    return lines


def _mut_e105(ctx: _Ctx) -> _Edit:
    sites = []
    for path, node in _calls(ctx.doc):
        api = ctx.background.apis.get(node.api)
        if api is None:
            continue
        for key in node.paras:
            param = api.params.get(key)
            if param is not None and param.required:
                sites.append(((("api", path), ("arg", path, key), ("missing", path)), (path, node, key)))
    path, node, key = ctx.pick(sites)
    claims = (("api-read", path), ("arg", path, key), ("missing", path))
    return _Edit(_remove_arg(ctx, node, key), path, claims)


_EXTRA_PARAMS = (("colour", '"blue"'), ("verbose", "true"), ("mode", '"fast"'), ("priority", "3"))


def _mut_e106(ctx: _Ctx) -> _Edit:
    sites = []
    for path, node in _calls(ctx.doc):
        api = ctx.background.apis.get(node.api)
        if api is None:
            continue
        for key, value in _EXTRA_PARAMS:
            if key not in api.params and key not in node.paras:
                sites.append(((("api", path), ("arg", path, key)), (path, node, key, value)))
    path, node, key, value = ctx.pick(sites)
    raw = ctx.lines[node.span.line - 1]
    close = raw.index(")", raw.index(f"CALL {node.api}("))
    sep = ", " if node.paras else ""
    lines = list(ctx.lines)
    lines[node.span.line - 1] = raw[:close] + f"{sep}{key}={value}" + raw[close:]
    return _Edit(lines, f"{path}.paras.{key}", (("api-read", path), ("arg", path, key)))


def _mut_e107(ctx: _Ctx) -> _Edit:
    types = _types(ctx)
    sites = []
    for path, node in _calls(ctx.doc):
        api = ctx.background.apis.get(node.api)
        if api is None:
            continue
        for key, arg in node.paras.items():
            param = api.params.get(key)
            if param is None:
                continue
            body = resolve(param.schema, types)
            if isinstance(body, OptionalOf):
                body = resolve(body.inner, types)
            if body is None or isinstance(body, OneOf):
                continue
            wrong = ("42", "true") if getattr(body, "kind", None) == "text" else ('"seven"', "false")
            for w in wrong:
                sites.append(((("api", path), ("arg", path, key)), (f"{path}.paras.{key}", (path, key), arg, w)))
    gold, (path, key), arg, wrong = ctx.pick(sites)
    old = _arg_value_text(ctx, arg)
    return _Edit(_replace_span(ctx, arg.span, f"={old}", f"={wrong}"), gold, (("api-read", path), ("arg", path, key)))


_OUT_OF_RANGE = {"text": ('"extreme"', '"JP"', '"unknown"', '"maximum"'), "number": ("-1", "999"), "boolean": ()}


def _mut_e108(ctx: _Ctx) -> _Edit:
    types = _types(ctx)
    sites = []
    for path, node in _calls(ctx.doc):
        api = ctx.background.apis.get(node.api)
        if api is None:
            continue
        for key, arg in node.paras.items():
            param = api.params.get(key)
            body = resolve(param.schema, types) if param is not None else None
            if isinstance(body, OptionalOf):
                body = resolve(body.inner, types)
            if not isinstance(body, OneOf):
                continue
            kind = literal_kind(body.values[0])
            for lit in _OUT_OF_RANGE.get(kind, ()):
                if json.loads(lit) not in body.values:
                    sites.append(((("api", path), ("arg", path, key)), (f"{path}.paras.{key}", (path, key), arg, lit)))
    gold, (path, key), arg, lit = ctx.pick(sites)
    old = _arg_value_text(ctx, arg)
    return _Edit(_replace_span(ctx, arg.span, f"={old}", f"={lit}"), gold, (("api-read", path), ("arg", path, key)))


def _mut_e109(ctx: _Ctx) -> _Edit:
    types = _types(ctx)
    candidates = [n for n in types if n not in BUILTINS]
    sites = []
    for path, node in _calls(ctx.doc):
        api = ctx.background.apis.get(node.api)
        if api is None or api.returns is None or node.response is None or not node.response.var_type:
            continue
        for t in candidates:
            if t != node.response.var_type and not assignable(Named(api.returns), Named(t), types):
                sites.append(((("api", path), ("resp", path)), (path, node, t)))
    path, node, t = ctx.pick(sites)
    lines = _replace_span(ctx, node.response.span, f": {node.response.var_type}", f": {t}")
    return _Edit(lines, path, (("api-read", path), ("resp", path)))


_OPERATORS: dict[str, Callable[[_Ctx], _Edit]] = {
    "E001": _mut_e001, "E002": _mut_e002, "E003": _mut_e003, "E004": _mut_e004, "E005": _mut_e005,
    "E101": _mut_e101, "E102": _mut_e102, "E103": _mut_e103, "E104": _mut_e104, "E105": _mut_e105,
    "E106": _mut_e106, "E107": _mut_e107, "E108": _mut_e108, "E109": _mut_e109,
}


def _join_lines(lines: list[str], trailing_newline: bool) -> str:
    return "\n".join(lines) + ("\n" if trailing_newline else "")


def _apply(source: str, code: str, rng: random.Random, background: Background, used: set[tuple]) -> tuple[str, str, tuple]:
    if code not in _OPERATORS:
        raise ValueError(f"unknown diagnostic code {code!r}")
    trailing = source.endswith("\n")
    lines = split_lines(source[:-1] if trailing else source)
    outcome = parse_document(source)
    ctx = _Ctx(lines, outcome.document, outcome.sections, background, rng, used)
    edit = _OPERATORS[code](ctx)
    return _join_lines(edit.lines, trailing), edit.path, edit.claims


def inject_error(
    valid_source: str, code: str, seed: int, background: Background | None = None
) -> tuple[str, GoldAnnotation]:
    """Introduce one defect of kind ``code``; same inputs give the same output."""
    background = background or fixture_background()
    rng = random.Random(f"{code}:{seed}")
    mutated, path, _ = _apply(valid_source, code, rng, background, set())
    return mutated, GoldAnnotation(f"{code}/{seed}", code, path)


def inject_errors(
    valid_source: str, codes: Sequence[str], seed: int, background: Background | None = None
) -> tuple[str, list[GoldAnnotation]]:
    """Inject several mutually independent defects (disjoint sites) one after another."""
    background = background or fixture_background()
    rng = random.Random(f"{'+'.join(codes)}:{seed}")
    used: set[tuple] = set()
    golds = []
    source = valid_source
    for code in codes:
        source, path, claims = _apply(source, code, rng, background, used)
        used.update(claims)
        golds.append(GoldAnnotation(f"{'+'.join(codes)}/{seed}", code, path))
    return source, golds


# --------------------------------------------------------------------------
# Corpus on disk


def generate_corpus(
    out_dir: str | Path,
    source: str | None = None,
    apis_file: str | Path | None = None,
    globals_file: str | Path | None = None,
    codes: Sequence[str] = ALL_CODES,
    seeds: Sequence[int] = DEFAULT_SEEDS,
) -> list[GoldAnnotation]:
    """Write ``<code>/<seed>/agent.cnlp`` + ``gold.json`` and a shared ``background/``."""
    out = Path(out_dir)
    apis_file = Path(apis_file) if apis_file else fixture_path("apis.json")
    globals_file = Path(globals_file) if globals_file else fixture_path("globals.json")
    source = source if source is not None else fixture_path("fitness_coach.cnlp").read_text(encoding="utf-8")
    background = load_background(apis_file, globals_file)
    (out / "background").mkdir(parents=True, exist_ok=True)
    shutil.copyfile(apis_file, out / "background" / "apis.json")
    shutil.copyfile(globals_file, out / "background" / "globals.json")
    golds = []
    for code in codes:
        for seed in seeds:
            mutated, gold = inject_error(source, code, seed, background)
            inst = out / code / str(seed)
            inst.mkdir(parents=True, exist_ok=True)
            (inst / "agent.cnlp").write_text(mutated, encoding="utf-8")
            (inst / "gold.json").write_text(json.dumps(asdict(gold), indent=2) + "\n", encoding="utf-8")
            golds.append(gold)
    return golds


def load_corpus(corpus_dir: str | Path) -> tuple[Background, dict[str, tuple[str, GoldAnnotation]]]:
    """Background plus ``instance_id -> (source, gold)`` for every instance on disk."""
    root = Path(corpus_dir)
    bg = load_background(root / "background" / "apis.json", root / "background" / "globals.json")
    instances = {}
    for gold_file in sorted(root.glob("*/*/gold.json")):
        gold = GoldAnnotation(**json.loads(gold_file.read_text(encoding="utf-8")))
        src = (gold_file.parent / "agent.cnlp").read_text(encoding="utf-8")
        instances[gold.instance_id] = (src, gold)
    return bg, instances


def _diagnostics_of(report: LintReport | Sequence[Diagnostic]) -> Sequence[Diagnostic]:
    return report if isinstance(report, (list, tuple)) else report.diagnostics


def score(
    reports: Mapping[str, LintReport | Sequence[Diagnostic]],
    golds: Mapping[str, GoldAnnotation | Sequence[GoldAnnotation]],
) -> CorpusScore:
    """Accuracy: instances whose gold is matched on both path and code.
    Redundancy: emitted diagnostics matching no gold, pooled over all instances."""
    if not reports or set(reports) != set(golds):
        raise ValueError("reports and golds must cover the same nonempty set of instances")
    correct = emitted = redundant = 0
    for iid, report in reports.items():
        gold = golds[iid]
        wanted = {(g.path, g.code) for g in ([gold] if isinstance(gold, GoldAnnotation) else gold)}
        diags = _diagnostics_of(report)
        found = {(d.path, d.code) for d in diags}
        if wanted <= found:
            correct += 1
        emitted += len(diags)
        redundant += sum((d.path, d.code) not in wanted for d in diags)
    n = len(reports)
    return CorpusScore(n, correct, correct / n, emitted, redundant, redundant / emitted if emitted else 0.0)


def score_corpus(corpus_dir: str | Path) -> CorpusScore:
    background, instances = load_corpus(corpus_dir)
    reports = {iid: lint(src, background) for iid, (src, _) in instances.items()}
    return score(reports, {iid: gold for iid, (_, gold) in instances.items()})

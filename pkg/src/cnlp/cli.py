"""``cnlp`` command line: lint, parse, corpus-gen, corpus-score, transform."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .corpus import ALL_CODES, DEFAULT_SEEDS, InapplicableMutation, generate_corpus, score_corpus
from .diagnostics import atomic_write, error_file_text, render_text
from .frontend import parse_document
from .model import FormatError, to_ast_json
from .semantics import LintOptions, LintReport, lint
from .typesys import Background, load_background

EXIT_CLEAN, EXIT_DIAGNOSTICS, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # one line, no usage dump
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _add_background(p: argparse.ArgumentParser) -> None:
    p.add_argument("--apis", type=Path, help="API schema JSON file")
    p.add_argument("--globals", type=Path, help="global variable JSON file")
    p.add_argument("--types", type=Path, help="extra type definitions JSON file")


def _add_lint_outputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--emit-ast", type=Path, metavar="PATH")
    p.add_argument("--emit-errors", type=Path, metavar="PATH")
    p.add_argument("--emit-variables", type=Path, metavar="PATH")
    p.add_argument("--emit-types", type=Path, metavar="PATH")
    p.add_argument("--max-errors", type=_positive, metavar="N")
    p.add_argument("--llm", action="store_true", help="use the LLM worker strategy (needs CNLP_LLM_* env vars)")
    p.add_argument("--color", action="store_true", help="colour text output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cnlp", description="Parse and lint CNL-P agent definitions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("lint", help="check CNL-P files and report diagnostics")
    p.add_argument("files", nargs="+", type=Path)
    _add_background(p)
    _add_lint_outputs(p)

    p = sub.add_parser("parse", help="print the AST_Like JSON of a file")
    p.add_argument("file", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.add_argument("--llm", action="store_true")

    p = sub.add_parser("corpus-gen", help="write the error-injection corpus")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--seed", type=int, action="append", dest="seeds", metavar="N")
    p.add_argument("--code", action="append", dest="codes", choices=ALL_CODES, metavar="CODE")
    p.add_argument("--source", type=Path, help="valid base file (default: bundled fitness coach)")
    p.add_argument("--apis", type=Path)
    p.add_argument("--globals", type=Path)

    p = sub.add_parser("corpus-score", help="lint a corpus and report accuracy and redundancy")
    p.add_argument("corpus_dir", type=Path)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("transform", help="turn a natural-language description into CNL-P, then lint it")
    p.add_argument("file", type=Path, help="text file, or - for stdin")
    p.add_argument("-o", "--output", type=Path)
    _add_background(p)
    _add_lint_outputs(p)
    return parser


def _read(path: Path) -> str:
    try:
        return sys.stdin.read() if str(path) == "-" else path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _write(path: Path, text: str) -> None:
    try:
        atomic_write(path, text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def _background(args: argparse.Namespace) -> tuple[Background | None, LintOptions]:
    if args.apis is None and args.globals is None and args.types is None:
        print("note: no background given; API and global-variable checks skipped", file=sys.stderr)
        return None, LintOptions()
    try:
        bg = load_background(args.apis, args.globals, args.types)
    except OSError as exc:
        raise UsageError(f"cannot read background: {exc}") from exc
    except FormatError as exc:
        raise UsageError(f"malformed background: {exc}") from exc
    if args.apis is None:
        print("note: no --apis given; API checks skipped", file=sys.stderr)
    if args.globals is None:
        print("note: no --globals given; undeclared-variable checks skipped", file=sys.stderr)
    return bg, LintOptions(
        check_apis=args.apis is not None,
        check_globals=args.globals is not None,
        check_types=args.apis is not None or args.types is not None,
    )


def _worker_parser(use_llm: bool):
    if not use_llm:
        return None
    from .llm import LlmTransport, TransportError, llm_worker_strategy

    try:
        return llm_worker_strategy(LlmTransport.from_env())
    except TransportError as exc:
        raise UsageError(str(exc)) from exc


def _emit(report: LintReport, args: argparse.Namespace) -> None:
    if args.emit_ast:
        _write(args.emit_ast, report.ast_json)
    if args.emit_errors:
        _write(args.emit_errors, error_file_text(report.diagnostics))
    if args.emit_variables:
        _write(args.emit_variables, json.dumps(report.variables_obj(), indent=2, ensure_ascii=False) + "\n")
    if args.emit_types:
        _write(args.emit_types, json.dumps(report.types_obj(), indent=2, ensure_ascii=False) + "\n")


def _lint_sources(sources: list[tuple[str, str]], args: argparse.Namespace) -> int:
    background, base = _background(args)
    wp = _worker_parser(args.llm)
    found = False
    for name, text in sources:
        opts = replace(base, worker_parser=wp, max_errors=args.max_errors, source_name=name)
        report = lint(text, background, opts)
        _emit(report, args)
        if args.format == "json":
            sys.stdout.write(error_file_text(report.diagnostics))
        else:
            sys.stdout.write(render_text(report, color=args.color))
        found = found or bool(report.diagnostics)
    return EXIT_DIAGNOSTICS if found else EXIT_CLEAN


def _cmd_lint(args: argparse.Namespace) -> int:
    emits = (args.emit_ast, args.emit_errors, args.emit_variables, args.emit_types)
    if len(args.files) > 1 and (args.format == "json" or any(emits)):
        raise UsageError("--format json and --emit-* take a single input file")
    return _lint_sources([(str(f), _read(f)) for f in args.files], args)


def _cmd_parse(args: argparse.Namespace) -> int:
    outcome = parse_document(_read(args.file), worker_parser=_worker_parser(args.llm))
    text = to_ast_json(outcome.document)
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    if outcome.diagnostics:
        sys.stderr.write(render_text(outcome.diagnostics, filename=str(args.file)))
        return EXIT_DIAGNOSTICS
    return EXIT_CLEAN


def _cmd_corpus_gen(args: argparse.Namespace) -> int:
    source = _read(args.source) if args.source else None
    try:
        golds = generate_corpus(args.out_dir, source, args.apis, args.globals,
                                tuple(args.codes or ALL_CODES), tuple(args.seeds or DEFAULT_SEEDS))
    except InapplicableMutation as exc:
        raise UsageError(f"cannot build corpus from this source: {exc}") from exc
    except (OSError, FormatError) as exc:
        raise UsageError(str(exc)) from exc
    print(f"wrote {len(golds)} instances to {args.out_dir}")
    return EXIT_CLEAN


def _cmd_corpus_score(args: argparse.Namespace) -> int:
    try:
        result = score_corpus(args.corpus_dir)
    except (OSError, FormatError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot score {args.corpus_dir}: {exc}") from exc
    if args.format == "json":
        print(json.dumps(result.to_obj(), indent=2))
    else:
        print(f"instances: {result.instances}")
        print(f"accuracy: {result.accuracy:.4f} ({result.correct}/{result.instances})")
        print(f"redundancy_rate: {result.redundancy_rate:.4f} ({result.redundant}/{result.emitted})")
    return EXIT_CLEAN


def _cmd_transform(args: argparse.Namespace) -> int:
    if not args.llm:
        raise UsageError("transform calls a language model; pass --llm to opt in")
    from .llm import InvalidInputError, LlmTransport, TransportError, transform_nl_to_cnlp

    try:
        source = transform_nl_to_cnlp(_read(args.file), LlmTransport.from_env())
    except (InvalidInputError, TransportError) as exc:
        raise UsageError(str(exc)) from exc
    if args.output:
        _write(args.output, source)
    else:
        sys.stdout.write(source)
    args.llm = False  # the generated file is linted with the deterministic worker parser
    return _lint_sources([(str(args.output or "<transformed>"), source)], args)


_COMMANDS = {
    "lint": _cmd_lint,
    "parse": _cmd_parse,
    "corpus-gen": _cmd_corpus_gen,
    "corpus-score": _cmd_corpus_score,
    "transform": _cmd_transform,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cnlp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance gate. Each test states its criterion, tolerance, and prints one PASS/FAIL line."""

import hashlib
import json
import random
import time
from pathlib import Path

from cnlp.corpus import (
    ALL_CODES, GoldAnnotation, InapplicableMutation, fixture_path, generate_corpus, inject_errors, score,
    score_corpus,
)
from cnlp.diagnostics import diag
from cnlp.frontend import ParseOutcome, parse_document
from cnlp.model import Span, from_ast_json, to_ast_json
from cnlp.semantics import LintReport, lint
from cnlp.typesys import BUILTINS, TypeSchema, assignable, validate_value

import docgen
import oracle

GOLDEN = Path(__file__).parent / "golden"


def test_1_running_example(criterion, buggy_source, clean_source, background):
    """Buggy file: exactly one E107 at the preference parameter; clean file: nothing; each run < 1 s."""
    t0 = time.perf_counter()
    buggy = lint(buggy_source, background)
    t_buggy = time.perf_counter() - t0
    t0 = time.perf_counter()
    clean = lint(clean_source, background)
    t_clean = time.perf_counter() - t0
    got = [(d.code, d.path) for d in buggy.diagnostics]
    ok = (got == [("E107", "worker.main_flow.step_2.command1.paras.preference")]
          and clean.diagnostics == [] and max(t_buggy, t_clean) < 1.0
          and to_ast_json(parse_document(clean_source).document) == (GOLDEN / "fitness_clean.ast.json").read_text())
    criterion(ok, f"buggy={got} clean={len(clean.diagnostics)} diags, max runtime {max(t_buggy, t_clean) * 1000:.1f} ms")


def test_2_region_jp(criterion, task007_source, background_jp):
    """Exactly one E108 at the region parameter path, reason naming the five allowed values."""
    diags = lint(task007_source, background_jp).diagnostics
    got = [(d.code, d.path) for d in diags]
    ok = (got == [("E108", "worker.main_flow.step_2.command1.paras.user.region")]
          and '["US","CA","AU","UK","IN"]' in diags[0].reason)
    criterion(ok, f"{got} reason={diags[0].reason if diags else None!r}")


def test_3_corpus_accuracy_and_redundancy(criterion, tmp_path):
    """Frozen 56-instance corpus scores accuracy 1.0 and redundancy 0.0 exactly;
    the scorer reproduces 36/47 = 0.766 within 0.001."""
    golds = generate_corpus(tmp_path)
    manifest = json.loads((GOLDEN / "corpus_manifest.json").read_text())
    frozen = {g.instance_id: {"code": g.code, "path": g.path,
                              "sha256": hashlib.sha256((tmp_path / g.code / g.instance_id.split("/")[1] / "agent.cnlp")
                                                       .read_bytes()).hexdigest()}
              for g in golds}
    result = score_corpus(tmp_path)

    tally_golds, tally_reports = {}, {}
    for n in range(47):
        iid = f"t{n}"
        tally_golds[iid] = GoldAnnotation(iid, "E107", f"p{n}")
        if n < 36:
            d = diag("E107", f"p{n}", Span.point())
        elif n < 40:
            d = diag("E108", f"p{n}", Span.point())
        elif n < 46:
            d = diag("E101", "q", Span.point())
        else:
            d = diag("E107", "q", Span.point())
        tally_reports[iid] = [d]
    tally = score(tally_reports, tally_golds).accuracy

    ok = (frozen == manifest and len(golds) == 56 and {g.code for g in golds} == set(ALL_CODES)
          and result.accuracy == 1.0 and result.redundancy_rate == 0.0 and abs(tally - 0.766) <= 0.001)
    criterion(ok, f"instances={result.instances} accuracy={result.accuracy} redundancy={result.redundancy_rate} "
                  f"frozen_match={frozen == manifest} tally={tally:.4f}")


def test_4_continue_on_error(criterion, coach_source, background):
    """k = 2..5 independent injected errors: every gold (path, code) is reported."""
    rng = random.Random(2024)
    applied = {k: 0 for k in range(2, 6)}
    misses = []
    for k in range(2, 6):
        for i in range(60):
            codes = rng.sample(ALL_CODES, k)
            try:
                src, golds = inject_errors(coach_source, codes, i, background)
            except InapplicableMutation:
                continue
            applied[k] += 1
            got = {(d.path, d.code) for d in lint(src, background).diagnostics}
            missing = {(g.path, g.code) for g in golds} - got
            if missing:
                misses.append((codes, i, sorted(missing)))
    ok = not misses and all(n >= 40 for n in applied.values())
    criterion(ok, f"documents per k={applied} uncovered={misses[:3]}")


def test_5_round_trip(criterion):
    """500 generated documents: from_ast_json(to_ast_json(d)) == d and byte-stable re-serialization."""
    failures = 0
    for seed in range(500):
        doc = docgen.random_document(random.Random(seed))
        text = to_ast_json(doc)
        back = from_ast_json(text)
        if back != doc or to_ast_json(back) != text or to_ast_json(doc) != text:
            failures += 1
    criterion(failures == 0, f"500 documents, {failures} failures")


def _command_objects(node):
    if isinstance(node, dict):
        for key, value in node.items():
            if key.startswith("command") and isinstance(value, dict):
                yield value
            yield from _command_objects(value)


def test_6_paras_pattern(criterion, tmp_path):
    """In every serialized fixture, a command object has "paras" iff its type is call_api."""
    texts = [to_ast_json(parse_document(p.read_text()).document) for p in sorted(fixture_path(".").glob("*.cnlp"))]
    texts += [p.read_text() for p in sorted(GOLDEN.glob("*.ast.json"))]
    generate_corpus(tmp_path)
    texts += [to_ast_json(parse_document(p.read_text()).document) for p in sorted(tmp_path.glob("*/*/agent.cnlp"))]
    texts += [to_ast_json(docgen.random_document(random.Random(s))) for s in range(200)]
    commands = violations = 0
    for text in texts:
        worker = json.loads(text).get("worker")
        if worker is None:
            continue
        for cmd in _command_objects(worker["main_flow"]):
            commands += 1
            if ("paras" in cmd) != (cmd["type"] == "call_api"):
                violations += 1
    criterion(violations == 0 and commands > 1000, f"{len(texts)} documents, {commands} commands, {violations} violations")


def test_7_validator_oracle(criterion):
    """validate_value agrees with brute-force enumeration; assignable implies universal validation."""
    pairs = disagreements = unsound = 0
    for seed in range(150):
        rng = random.Random(seed)
        named = oracle.random_named(rng)
        types = {**BUILTINS, **{n: TypeSchema(n, b) for n, b in named.items()}}
        schemas = [oracle.random_schema(rng, list(named)) for _ in range(6)]
        for schema in schemas:
            universe = oracle.universe(schema, named, rng)
            assert len(universe) <= 256
            for value in universe:
                pairs += 1
                if (validate_value(value, schema, types) == []) != oracle.member(value, schema, named):
                    disagreements += 1
        for src in schemas:
            for dst in schemas:
                if assignable(src, dst, types):
                    if any(validate_value(v, dst, types) for v in oracle.extension(src, named)):
                        unsound += 1
    criterion(disagreements == 0 and unsound == 0,
              f"{pairs} (value, schema) pairs, {disagreements} disagreements, {unsound} unsound assignable pairs")


def _mutate(rng, text):
    lines = text.split("\n")
    op = rng.randrange(6)
    if op == 0 and lines:
        del lines[rng.randrange(len(lines))]
    elif op == 1 and lines:
        i = rng.randrange(len(lines))
        lines.insert(rng.randrange(len(lines) + 1), lines[i])
    elif op == 2 and len(lines) > 1:
        i, j = rng.randrange(len(lines)), rng.randrange(len(lines))
        lines[i], lines[j] = lines[j], lines[i]
    elif op == 3:
        data = bytearray("\n".join(lines).encode())
        for _ in range(rng.randint(1, 8)):
            if data:
                data[rng.randrange(len(data))] = rng.randrange(256)
        return data.decode("utf-8", errors="replace")
    elif op == 4 and lines:
        i = rng.randrange(len(lines))
        cut = rng.randrange(len(lines[i]) + 1)
        lines[i] = lines[i][:cut]
    else:
        tokens = ["DEFINE_WORKER W:", "END_IF", "IF x:", "ELSE:", "STEP 0:", "CALL f(", "-> SET", "{_x",
                  "DEFINE_TYPES:", "END_AGENT", '"', "one of [", "(optional)", "\t", "\r", "\x00", "MAIN_FLOW:"]
        i = rng.randrange(len(lines) + 1)
        lines.insert(i, " " * rng.randrange(9) + rng.choice(tokens))
    return "\n".join(lines)


def test_8_fuzz_robustness(criterion, background):
    """10,000 random byte/line mutations never crash parse_document or lint."""
    sources = [p.read_text() for p in sorted(fixture_path(".").glob("*.cnlp"))]
    rng = random.Random(8)
    crashes = []
    for i in range(10_000):
        text = rng.choice(sources)
        for _ in range(rng.randint(1, 3)):
            text = _mutate(rng, text)
        try:
            outcome = parse_document(text)
            report = lint(text, background)
            assert isinstance(outcome, ParseOutcome) and isinstance(report, LintReport)
        except Exception as exc:  # noqa: BLE001 - any escape is a finding
            crashes.append((i, type(exc).__name__, str(exc)[:80]))
    criterion(not crashes, f"10000 mutations, {len(crashes)} crashes {crashes[:3]}")

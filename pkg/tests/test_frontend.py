import pytest

from cnlp.frontend import (
    TypeSyntaxError, parse_attr_section, parse_document, parse_type_expr, parse_types, parse_variables,
    parse_worker, segment, tokenize,
)
from cnlp.model import (
    Base, CallApi, Display, GeneralCommand, IfBlock, ListOf, Literal, Named, OneOf, OptionalOf, RequestInput,
    VarRef,
)


def _section(kind, body, label=""):
    """Wrap ``body`` in an agent and return the parsed section of ``kind``."""
    marker = kind.upper()
    head = f"DEFINE_{marker} {label}".rstrip() if label else f"DEFINE_{marker}:"
    src = f"DEFINE_AGENT A\n{head}\n{body}\nEND_{marker}\nEND_AGENT\n"
    sections, diags = segment(src)
    assert diags == []
    return next(s for s in sections if s.kind == kind)


def _worker(body):
    return parse_worker(_section("worker", body, "W:"))


def codes(diags):
    return [d.code for d in diags]


# -- segmentation


def test_persona_section_found():
    sections, diags = segment("DEFINE_AGENT A\nDEFINE_PERSONA:\n    ROLE: tutor\nEND_PERSONA\nEND_AGENT\n")
    assert diags == []
    assert [s.kind for s in sections] == ["agent_header", "persona", "agent_footer"]
    assert sections[1].body.strip() == "ROLE: tutor"


def test_mid_line_keyword_does_not_open_section():
    sections, diags = segment(
        "DEFINE_AGENT A\nDEFINE_CONSTRAINTS:\n    ESCALATE: You must CALL a doctor if unsure, DEFINE_PERSONA too\n"
        "END_CONSTRAINTS\nEND_AGENT\n")
    assert diags == []
    assert [s.kind for s in sections] == ["agent_header", "constraints", "agent_footer"]


def test_empty_source():
    sections, diags = segment("")
    assert sections == []
    assert codes(diags) == ["E002"]


def test_unknown_section_is_e001():
    _, diags = segment("DEFINE_AGENT A\nDEFINE_NOTES:\n  hi\nEND_NOTES\nEND_AGENT\n")
    assert codes(diags) == ["E001"]
    assert diags[0].span.line == 2


def test_missing_end_is_e002_and_recovers():
    sections, diags = segment("DEFINE_AGENT A\nDEFINE_PERSONA:\n  ROLE: r\nDEFINE_CONSTRAINTS:\n  A: b\nEND_CONSTRAINTS\nEND_AGENT\n")
    assert [(d.code, d.path) for d in diags] == [("E002", "persona")]
    assert "constraints" in [s.kind for s in sections]


def test_duplicate_section_is_e005():
    src = "DEFINE_AGENT A\nDEFINE_PERSONA:\n  ROLE: r\nEND_PERSONA\nDEFINE_PERSONA:\n  ROLE: q\nEND_PERSONA\nEND_AGENT\n"
    sections, diags = segment(src)
    assert [(d.code, d.span.line) for d in diags] == [("E005", 5)]
    assert [s.kind for s in sections].count("persona") == 1


def test_crlf_line_endings():
    src = "DEFINE_AGENT A\r\nDEFINE_PERSONA:\r\n  ROLE: r\r\nEND_PERSONA\r\nEND_AGENT\r\n"
    out = parse_document(src)
    assert out.diagnostics == []
    assert out.document.persona.role == "r"


# -- tokens


def test_tokenize_classifies_words():
    kinds = [(t.kind, t.lexeme) for t in tokenize('CALL f(x=_v, n=3, ok=true) -> SET _r: Plan')]
    assert ("keyword", "CALL") in kinds
    assert ("var_name", "_v") in kinds
    assert ("literal", "3") in kinds
    assert ("literal", "true") in kinds
    assert ("type_name", "Plan") in kinds


def test_token_columns():
    toks = tokenize("  DISPLAY _x", line=7, col=1)
    assert toks[0].span.line == 7 and toks[0].span.col == 3


# -- persona / constraints


def test_persona_role():
    persona, diags = parse_attr_section(_section("persona", "    ROLE: fitness and health assistant"))
    assert diags == []
    assert persona.role == "fitness and health assistant"


def test_persona_line_without_colon():
    persona, diags = parse_attr_section(_section("persona", "    ROLE: r\n    safety only share verified tips"))
    assert codes(diags) == ["E003"]
    assert diags[0].span.line == 4
    assert persona.role == "r"


def test_persona_requires_role():
    _, diags = parse_attr_section(_section("persona", "    TONE: calm"))
    assert [(d.code, d.path) for d in diags] == [("E003", "persona")]


def test_single_constraint():
    cons, diags = parse_attr_section(_section("constraints", "    SAFETY: share only safe and verified health tips"))
    assert diags == []
    assert len(cons) == 1
    assert (cons[0].name, cons[0].text) == ("SAFETY", "share only safe and verified health tips")


def test_duplicate_constraint_name():
    _, diags = parse_attr_section(_section("constraints", "    A: x\n    A: y"))
    assert codes(diags) == ["E003"]


# -- types


def test_workout_type_enum():
    types, diags = parse_types(_section(
        "types", '    WorkoutType:\n        focus: one of ["strength","cardio","flexibility","balance"]'))
    assert diags == []
    assert types["WorkoutType"].fields["focus"].type == OneOf(("strength", "cardio", "flexibility", "balance"))


def test_empty_types_section():
    types, diags = parse_types(_section("types", ""))
    assert types == {} and diags == []


def test_unknown_constructor_lst():
    _, diags = parse_types(_section("types", "    T:\n        count: lst of number"))
    assert [(d.code, d.path) for d in diags] == [("E004", "types.T")]
    assert "lst" in diags[0].reason


@pytest.mark.parametrize("expr,expected", [
    ("text", Base("text")),
    ("UserAccount", Named("UserAccount")),
    ("list of number", ListOf(Base("number"))),
    ("list of list of Plan", ListOf(ListOf(Named("Plan")))),
    ('one of [1, 2.5]', OneOf((1, 2.5))),
    ("boolean (optional)", OptionalOf(Base("boolean"))),
])
def test_type_expressions(expr, expected):
    assert parse_type_expr(tokenize(expr)) == expected


@pytest.mark.parametrize("expr", ["list of", "one of []", 'one of [1, "a"]', "text (optional) (optional)", "numbr", ""])
def test_bad_type_expressions(expr):
    with pytest.raises(TypeSyntaxError):
        parse_type_expr(tokenize(expr))


# -- variables


def test_global_style_variable():
    decls, diags = parse_variables(_section("variables", "    _user_account_fitness: UserAccount"))
    assert diags == []
    assert decls["_user_account_fitness"].type == Named("UserAccount")


def test_variable_without_underscore():
    decls, diags = parse_variables(_section("variables", "    plan: text"))
    assert codes(diags) == ["E003"]
    assert decls == {}


def test_variable_initial_value():
    decls, diags = parse_variables(_section("variables", "    _retries: number = 3"))
    assert diags == []
    assert decls["_retries"].initial == 3


# -- worker


def test_call_line():
    worker, diags = _worker(
        "    MAIN_FLOW:\n    STEP 1:\n        CALL get_diet_plan(user=_user_account_fitness, preference=_workout_type)"
        " -> SET _diet_plan: DietPlan")
    assert diags == []
    call = worker.main_flow[0].commands[0]
    assert isinstance(call, CallApi)
    assert call.paras["user"].value == VarRef("_user_account_fitness")
    assert call.paras["preference"].value == VarRef("_workout_type")
    assert (call.response.name, call.response.var_type) == ("_diet_plan", "DietPlan")


def test_general_line():
    text = "Make reasonable adjustments based on the information provided"
    worker, diags = _worker(f"    MAIN_FLOW:\n    STEP 1:\n        {text}")
    assert diags == []
    assert worker.main_flow[0].commands[0] == GeneralCommand(text)


def test_request_input_line():
    worker, diags = _worker(
        '    MAIN_FLOW:\n    STEP 1:\n        REQUEST_INPUT _workout_type : WorkoutType PROMPT "What type of workout?"')
    assert diags == []
    assert worker.main_flow[0].commands[0] == RequestInput("_workout_type", Named("WorkoutType"), "What type of workout?")


def test_if_else_block():
    worker, diags = _worker(
        "    MAIN_FLOW:\n    STEP 1:\n        IF the user is new:\n            DISPLAY \"hi\"\n        ELSE:\n"
        "            CALL f(n=1)\n        END_IF\n        DISPLAY \"bye\"")
    assert diags == []
    block, after = worker.main_flow[0].commands
    assert isinstance(block, IfBlock)
    assert block.then == (Display("hi"),)
    assert block.else_[0].paras["n"].value == Literal(1)
    assert after == Display("bye")


def test_if_without_end_if():
    _, diags = _worker("    MAIN_FLOW:\n    STEP 1:\n        IF x:\n            DISPLAY \"a\"")
    assert [(d.code, d.path) for d in diags] == [("E002", "worker.main_flow.step_1.command1")]


def test_malformed_call_degrades_to_general():
    worker, diags = _worker("    MAIN_FLOW:\n    STEP 1:\n        CALL broken(x=\n        DISPLAY \"ok\"")
    assert [(d.code, d.path) for d in diags] == [("E003", "worker.main_flow.step_1.command1")]
    assert isinstance(worker.main_flow[0].commands[0], GeneralCommand)
    assert worker.main_flow[0].commands[1] == Display("ok")


def test_step_numbers_must_increase():
    _, diags = _worker("    MAIN_FLOW:\n    STEP 1:\n        a\n    STEP 3:\n        b")
    assert codes(diags) == ["E003"]


def test_empty_worker_body():
    worker, diags = _worker("")
    assert worker.main_flow == ()
    assert codes(diags) == ["E003"]


def test_inputs_outputs_headers():
    worker, diags = _worker("    INPUTS: _a, _b\n    OUTPUTS: none\n    MAIN_FLOW:\n    STEP 1:\n        go")
    assert diags == []
    assert worker.inputs == ("_a", "_b") and worker.outputs == ()


# -- whole documents


def test_running_example_parses_clean(clean_source):
    out = parse_document(clean_source)
    assert out.diagnostics == []
    doc = out.document
    assert doc.persona is not None
    assert len(doc.constraints) == 2
    assert doc.worker is not None and len(doc.worker.main_flow) == 3


def test_deleted_end_persona_still_parses_worker(clean_source):
    src = clean_source.replace("END_PERSONA\n", "", 1)
    out = parse_document(src)
    assert [(d.code, d.path) for d in out.diagnostics] == [("E002", "persona")]
    assert out.document.worker is not None
    assert out.document.worker == parse_document(clean_source).document.worker


def test_empty_document():
    out = parse_document("")
    assert len(out.diagnostics) == 1
    assert out.document.persona is None and out.document.worker is None


def test_keyword_in_constraint_of_coach(coach_source):
    out = parse_document(coach_source)
    assert out.diagnostics == []
    assert any("CALL" in c.text for c in out.document.constraints)


def test_string_literal_with_control_character():
    [tok] = tokenize('"a\tb"')
    assert tok.kind == "literal" and tok.value == "a\tb"


def test_invalid_escape_is_malformed_call():
    _, diags = _worker('    MAIN_FLOW:\n    STEP 1:\n        CALL f(x="a\\qb")')
    assert codes(diags) == ["E003"]

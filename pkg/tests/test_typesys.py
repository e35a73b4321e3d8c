import json
import random

import pytest

from cnlp.frontend import parse_document
from cnlp.model import Base, ListOf, Named, ObjectType, OneOf, OptionalOf
from cnlp.typesys import (
    BUILTINS, Background, BackgroundError, TypeSchema, assignable, background_from_obj, load_background,
    lower_types, type_info_obj, validate_value,
)

import oracle

REGIONS = OneOf(("US", "CA", "AU", "UK", "IN"))


def _types(**bodies):
    return {**BUILTINS, **{n: TypeSchema(n, b) for n, b in bodies.items()}}


def _lower(src_types_body):
    doc = parse_document(f"DEFINE_AGENT A\nDEFINE_TYPES:\n{src_types_body}\nEND_TYPES\nEND_AGENT\n").document
    return lower_types(doc.types, Background())


# -- lowering


def test_workout_type_lowering():
    types, diags = _lower('    WorkoutType:\n        focus: one of ["strength","cardio","flexibility","balance"]')
    assert diags == []
    schema = types["WorkoutType"]
    assert schema.temporary
    assert schema.body == ObjectType({"focus": OneOf(("strength", "cardio", "flexibility", "balance"))})


def test_empty_lowering_is_builtins_plus_background(background):
    types, diags = lower_types({}, background)
    assert diags == []
    assert set(types) == set(BUILTINS) | set(background.types)


def test_missing_reference_is_e103():
    _, diags = _lower("    Plan:\n        owner: Missing")
    assert [(d.code, d.path) for d in diags] == [("E103", "types.Plan.owner")]


def test_cycle_reported_once():
    _, diags = _lower("    A:\n        b: B\n    B:\n        a: A")
    assert [(d.code, d.path) for d in diags] == [("E103", "types.A")]


def test_optional_recursion_is_still_a_cycle():
    types, diags = _lower("    Node:\n        next: Node (optional)")
    assert [d.code for d in diags] == ["E103"]
    assert "Node" not in types


def test_type_info_file_lists_document_types(background):
    types, _ = lower_types(parse_document(
        'DEFINE_AGENT A\nDEFINE_TYPES:\n    W:\n        f: one of ["x"]\nEND_TYPES\nEND_AGENT\n').document.types, background)
    info = type_info_obj(types)
    text = json.dumps(info)
    assert '"W"' in text and "UserAccount" in text
    assert '"text"' not in json.dumps(list(info.get("types", info)))


# -- background loading


def test_region_enum_api():
    bg = background_from_obj({"apis": {"get_workout_plan": {"params": {
        "region": {"type": {"one_of": ["US", "CA", "AU", "UK", "IN"]}, "required": True}}}}}, {})
    param = bg.apis["get_workout_plan"].params["region"]
    assert param.required
    assert param.schema == REGIONS


def test_empty_background():
    bg = background_from_obj({}, {})
    assert bg.apis == {} and bg.globals == {} and bg.types == {}


def test_duplicate_param_key_rejected(tmp_path):
    apis = tmp_path / "apis.json"
    apis.write_text('{"apis": {"f": {"params": {"x": {"type": "text"}, "x": {"type": "number"}}}}}')
    glob = tmp_path / "g.json"
    glob.write_text("{}")
    with pytest.raises(BackgroundError) as err:
        load_background(apis, glob)
    assert "x" in str(err.value)


def test_global_with_unknown_type_rejected():
    with pytest.raises(BackgroundError) as err:
        background_from_obj({}, {"globals": {"_g": {"type": {"named": "Nope"}}}})
    assert err.value.code == "E103"


def test_unknown_top_level_key_rejected():
    with pytest.raises(BackgroundError):
        background_from_obj({}, {"_g": {"type": "text"}})


def test_fixture_background_loads(background):
    assert set(background.apis) == {"get_diet_plan", "get_workout_plan", "log_progress"}
    assert background.globals["_user_account_fitness"].value["region"] == "US"


# -- validation examples


def test_jp_region_is_e108():
    diags = validate_value("JP", REGIONS, BUILTINS, at="region")
    assert [d.code for d in diags] == ["E108"]
    assert '["US","CA","AU","UK","IN"]' in diags[0].reason


def test_us_region_is_valid():
    assert validate_value("US", REGIONS, BUILTINS) == []


def test_missing_required_field_is_e105():
    schema = ObjectType({"name": Base("text"), "age": Base("number")})
    diags = validate_value({"name": "x"}, schema, BUILTINS, at="user")
    assert [(d.code, d.path) for d in diags] == [("E105", "user.age")]


def test_extra_field_is_e106():
    diags = validate_value({"a": True, "b": 1}, ObjectType({"a": Base("boolean")}), BUILTINS, at="v")
    assert [(d.code, d.path) for d in diags] == [("E106", "v.b")]


def test_list_paths_carry_indices():
    diags = validate_value([1, "x", 3], ListOf(Base("number")), BUILTINS, at="xs")
    assert [(d.code, d.path) for d in diags] == [("E107", "xs.1")]


def test_unknown_named_is_e103():
    assert [d.code for d in validate_value({}, Named("Ghost"), BUILTINS)] == ["E103"]


def test_bool_is_not_a_number():
    assert [d.code for d in validate_value(True, Base("number"), BUILTINS)] == ["E107"]
    assert validate_value(2.5, Base("number"), BUILTINS) == []


# -- assignability examples


def test_workout_type_not_assignable_to_text(background):
    types, _ = lower_types(parse_document(
        'DEFINE_AGENT A\nDEFINE_TYPES:\n    WorkoutType:\n        focus: one of ["a","b"]\nEND_TYPES\nEND_AGENT\n'
    ).document.types, background)
    assert not assignable(Named("WorkoutType"), Base("text"), types)
    assert assignable(Named("WorkoutType"), Named("WorkoutType"), types)


def test_enum_subset():
    small, big = OneOf(("a", "b")), OneOf(("a", "b", "c"))
    assert assignable(small, big, BUILTINS)
    assert not assignable(big, small, BUILTINS)


def test_optional_rules():
    assert assignable(Base("text"), OptionalOf(Base("text")), BUILTINS)
    assert not assignable(OptionalOf(Base("text")), Base("text"), BUILTINS)
    assert assignable(ListOf(OneOf((1,))), ListOf(Base("number")), BUILTINS)


def test_distinct_named_objects_are_nominal():
    types = _types(A=ObjectType({"x": Base("text")}), B=ObjectType({"x": Base("text")}))
    assert not assignable(Named("A"), Named("B"), types)
    assert assignable(Named("A"), ObjectType({"x": Base("text")}), types)


# -- oracle equivalence (bounded exhaustive per random schema)


@pytest.mark.parametrize("seed", range(60))
def test_validator_matches_enumeration(seed):
    rng = random.Random(seed)
    named = oracle.random_named(rng)
    types = _types(**named)
    for _ in range(8):
        schema = oracle.random_schema(rng, list(named))
        for value in oracle.universe(schema, named, rng):
            diags = validate_value(value, schema, types)
            assert (diags == []) == oracle.member(value, schema, named), (schema, value, diags)
            assert {d.code for d in diags} <= {"E105", "E106", "E107", "E108"}


@pytest.mark.parametrize("seed", range(40))
def test_assignable_sound_and_structurally_complete(seed):
    rng = random.Random(1000 + seed)
    named = oracle.random_named(rng)
    types = _types(**named)
    pool = [oracle.random_schema(rng, list(named)) for _ in range(10)]
    for src in pool:
        for dst in pool:
            every = all(validate_value(v, dst, types) == [] for v in oracle.extension(src, named))
            if assignable(src, dst, types):
                assert every, (src, dst)
            elif not (oracle.mentions_named(src) or oracle.mentions_named(dst)):
                assert not every, (src, dst)

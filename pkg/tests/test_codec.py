import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faceact.actions import ACTION_COUNT, ACTIONS, HEAD_MOTION_MASK, REGION_BY_ACTION
from faceact.codec import (
    SCHEMA_VERSION,
    encode_target,
    extract_first_object,
    parse_prediction,
    target_schema,
    validate_coefficients,
)
from faceact.errors import ParseError, ValidationError
from faceact.frames import ActionValueSet, format_value
from faceact.teacher import (
    MuscleMovement,
    SemanticDescription,
    rule_based_description,
)

from conftest import random_values


def make_set(**overrides) -> ActionValueSet:
    values = {name: 0.0 for name in ACTIONS}
    values.update(overrides)
    return ActionValueSet(values)


def quantized(s: ActionValueSet) -> ActionValueSet:
    return ActionValueSet({name: float(format_value(v)) for name, v in s.entries.items()})


def descriptions():
    movements = st.lists(
        st.sampled_from(sorted(REGION_BY_ACTION)).map(
            lambda a: st.sampled_from(["slight", "moderate", "strong"]).map(
                lambda i: MuscleMovement(REGION_BY_ACTION[a], a, i)
            )
        ).flatmap(lambda x: x),
        max_size=6,
    )
    return st.builds(
        SemanticDescription,
        expression_type=st.sampled_from(["neutral", "smiling", "mouth wide open", "eye movement"]),
        muscle_movements=movements.map(tuple),
        emotion_cue=st.one_of(st.none(), st.sampled_from(["happy", "displeased"])),
        symmetry_pattern=st.sampled_from(["symmetric", "asymmetric: EyeBlinkLeft vs EyeBlinkRight"]),
    )


class TestEncode:
    def test_zero_set_renders_all_zero(self):
        s = make_set()
        t = encode_target(rule_based_description(s), s)
        assert t.raw_text.count("0.000") == ACTION_COUNT
        doc = json.loads(t.raw_text)
        assert list(doc) == ["analysis", "arkit"]
        assert list(doc["arkit"]) == list(ACTIONS)

    def test_rounding_rule(self):
        t = encode_target(rule_based_description(make_set()), make_set(JawOpen=0.4005))
        assert '"JawOpen": 0.401' in t.raw_text

    def test_byte_deterministic(self, rng):
        s = ActionValueSet.from_values(random_values(rng))
        d = rule_based_description(s)
        assert encode_target(d, s).raw_text == encode_target(d, s).raw_text


class TestStrictParse:
    def test_round_trip_identity(self, rng):
        for _ in range(25):
            s = ActionValueSet.from_values(random_values(rng))
            d = rule_based_description(s)
            parsed = parse_prediction(encode_target(d, s).raw_text, "strict")
            assert parsed.description == d
            assert parsed.action_values == quantized(s)
            assert parsed.repairs == ()

    def test_missing_key_named(self):
        t = encode_target(rule_based_description(make_set()), make_set()).raw_text
        doc = json.loads(t)
        del doc["arkit"]["EyeBlinkLeft"]
        broken = t.replace('"EyeBlinkLeft": 0.000, ', "")
        with pytest.raises(ValidationError, match="EyeBlinkLeft"):
            parse_prediction(broken, "strict")

    def test_extra_key_named(self):
        t = encode_target(rule_based_description(make_set()), make_set()).raw_text
        broken = t.replace('"MouthRight": 0.000', '"MouthRight": 0.000, "Bogus": 0.000')
        with pytest.raises(ValidationError, match="Bogus"):
            parse_prediction(broken, "strict")

    def test_extra_top_level_key(self):
        t = encode_target(rule_based_description(make_set()), make_set()).raw_text
        broken = t[:-1] + ', "notes": "hi"}'
        with pytest.raises(ValidationError, match="notes"):
            parse_prediction(broken, "strict")

    def test_non_numeric_named(self):
        t = encode_target(rule_based_description(make_set()), make_set()).raw_text
        broken = t.replace('"JawOpen": 0.000', '"JawOpen": "high"')
        with pytest.raises(ValidationError, match="JawOpen"):
            parse_prediction(broken, "strict")

    def test_wrong_decimal_rendering_rejected(self):
        t = encode_target(rule_based_description(make_set()), make_set()).raw_text
        for bad in ('"JawOpen": 0', '"JawOpen": 0.0', '"JawOpen": 0.0000', '"JawOpen": 1e-3'):
            broken = t.replace('"JawOpen": 0.000', bad)
            with pytest.raises(ValidationError, match="JawOpen"):
                parse_prediction(broken, "strict")

    def test_movement_with_extra_key_rejected(self):
        s = make_set(MouthSmileLeft=0.7, MouthSmileRight=0.7)
        t = encode_target(rule_based_description(s), s).raw_text
        broken = t.replace('"intensity": "strong"}', '"intensity": "strong", "note": "x"}', 1)
        with pytest.raises(ValidationError, match="note"):
            parse_prediction(broken, "strict")
        # lenient keeps the movement and records nothing for benign extras
        parsed = parse_prediction(broken, "lenient")
        assert any(m.action == "MouthSmileLeft" for m in parsed.description.muscle_movements)

    def test_not_json(self):
        with pytest.raises(ParseError):
            parse_prediction("this is prose", "strict")

    def test_prose_wrapping_rejected_strictly(self):
        t = encode_target(rule_based_description(make_set()), make_set()).raw_text
        with pytest.raises(ParseError):
            parse_prediction("result: " + t, "strict")

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            parse_prediction("{}", "fuzzy")


class TestLenientParse:
    def test_prose_wrapped_with_missing_key(self):
        s = make_set(JawOpen=0.5)
        t = encode_target(rule_based_description(s), s).raw_text
        wrapped = "Here is the result: " + t.replace('"EyeBlinkLeft": 0.000, ', "") + " hope it helps"
        parsed = parse_prediction(wrapped, "lenient")
        fills = [r for r in parsed.repairs if r[0] == "fill"]
        assert len(fills) == 1 and fills[0][1] == "EyeBlinkLeft"
        assert parsed.action_values["EyeBlinkLeft"] == 0.0
        assert parsed.action_values["JawOpen"] == 0.5

    def test_out_of_range_clamped(self):
        s = make_set()
        t = encode_target(rule_based_description(s), s).raw_text
        broken = t.replace('"JawOpen": 0.000', '"JawOpen": 1.500')
        broken = broken.replace('"HeadRoll": 0.000', '"HeadRoll": -1.300')
        parsed = parse_prediction(broken, "lenient")
        clamps = {r[1]: r for r in parsed.repairs if r[0] == "clamp"}
        assert set(clamps) == {"JawOpen", "HeadRoll"}
        assert parsed.action_values["JawOpen"] == 1.0
        assert parsed.action_values["HeadRoll"] == -1.0

    def test_clean_round_trip_no_repairs(self, rng):
        s = ActionValueSet.from_values(random_values(rng))
        d = rule_based_description(s)
        parsed = parse_prediction(encode_target(d, s).raw_text, "lenient")
        assert parsed.repairs == ()
        assert parsed.description == d

    def test_missing_analysis_defaulted(self):
        arkit = make_set().canonical_json()
        parsed = parse_prediction('{"arkit": ' + arkit + "}", "lenient")
        assert parsed.description.expression_type == "unspecified"
        assert any(r[1] == "analysis" for r in parsed.repairs)

    def test_no_object_at_all(self):
        with pytest.raises(ParseError):
            parse_prediction("nothing here", "lenient")

    def test_extract_first_object_nested(self):
        obj, span = extract_first_object('prefix {"a": {"b": 1}} suffix {"c": 2}')
        assert obj == {"a": {"b": 1}}
        assert span[0] == 7


class TestValidateCoefficients:
    def test_zero_set_clean(self):
        assert validate_coefficients(make_set()) == []

    def test_range_violation(self):
        violations = validate_coefficients(make_set(JawOpen=1.5))
        assert len(violations) == 1
        assert violations[0].key == "JawOpen"
        assert violations[0].value == 1.5

    def test_signed_channel_ok(self):
        assert validate_coefficients(make_set(HeadRoll=-0.3)) == []

    def test_signed_channel_out_of_range(self):
        violations = validate_coefficients(make_set(HeadPitch=-1.2))
        assert [v.key for v in violations] == ["HeadPitch"]


class TestSchema:
    def test_shipped_schema(self):
        schema = target_schema()
        assert schema["version"] == SCHEMA_VERSION
        assert set(schema["properties"]) == {"analysis", "arkit"}
        assert len(schema["properties"]["arkit"]["required"]) == 61


@settings(max_examples=60, deadline=None)
@given(descriptions(), st.integers(0, 2**31))
def test_property_round_trip(description, seed):
    rng = np.random.default_rng(seed)
    s = ActionValueSet.from_values(random_values(rng))
    parsed = parse_prediction(encode_target(description, s).raw_text, "strict")
    assert parsed.description == description
    assert parsed.repairs == ()
    assert parsed.action_values == quantized(s)

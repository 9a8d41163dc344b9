"""Joint-target codec: serialize (analysis, arkit) pairs and parse them back.

The wire contract is a single JSON object with exactly two top-level keys:
"analysis" (the structured description) and "arkit" (all 61 coefficients,
each rendered with exactly three decimal places). Strict parsing enforces
every invariant and names the offending key; lenient parsing extracts the
first JSON object from surrounding prose and records every repair it makes.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources

from .actions import ACTION_INDEX, ACTIONS, HEAD_MOTION_ACTIONS
from .errors import ParseError, ValidationError
from .frames import ActionValueSet, format_value
from .teacher import (
    SemanticDescription,
    description_from_wire,
    description_to_wire,
)

__all__ = [
    "TargetSequence",
    "ParsedTarget",
    "Violation",
    "encode_target",
    "parse_prediction",
    "validate_coefficients",
    "extract_first_object",
    "target_schema",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = "1"

_THREE_DECIMALS = re.compile(r"-?\d+\.\d{3}\Z")


@dataclass(frozen=True)
class TargetSequence:
    """A description/coefficient pair plus its canonical serialized form."""

    analysis: SemanticDescription
    arkit: ActionValueSet
    raw_text: str


@dataclass(frozen=True)
class ParsedTarget:
    description: SemanticDescription
    action_values: ActionValueSet
    repairs: tuple[tuple[str, str, str], ...] = ()


@dataclass(frozen=True)
class Violation:
    key: str
    value: float
    rule: str


def encode_target(analysis: SemanticDescription, arkit: ActionValueSet) -> TargetSequence:
    """Canonical serialization: "analysis" first, then "arkit" in registry order."""
    analysis_json = json.dumps(description_to_wire(analysis), separators=(", ", ": "))
    raw_text = '{"analysis": ' + analysis_json + ', "arkit": ' + arkit.canonical_json() + "}"
    return TargetSequence(analysis=analysis, arkit=arkit, raw_text=raw_text)


class _RawNumber:
    """Lexical wrapper so strict parsing can check how a number was written."""

    __slots__ = ("text",)

    def __init__(self, text: str):
        self.text = text


def extract_first_object(text: str) -> tuple[dict, tuple[int, int]]:
    """Return the first well-formed JSON object embedded in ``text``."""
    decoder = json.JSONDecoder()
    start = 0
    while True:
        start = text.find("{", start)
        if start < 0:
            raise ParseError("no JSON object found in text")
        try:
            obj, end = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            start += 1
            continue
        if isinstance(obj, dict):
            return obj, (start, end)
        start += 1


def _parse_strict(text: str) -> ParsedTarget:
    try:
        doc = json.loads(
            text,
            parse_float=_RawNumber,
            parse_int=_RawNumber,
            parse_constant=_RawNumber,
        )
    except json.JSONDecodeError as exc:
        raise ParseError(f"not a valid JSON object: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be a JSON object")
    keys = list(doc)
    extra = [k for k in keys if k not in ("analysis", "arkit")]
    if extra:
        raise ValidationError(f"unexpected top-level key: {extra[0]}")
    for required in ("analysis", "arkit"):
        if required not in doc:
            raise ValidationError(f"missing top-level key: {required}")

    arkit = doc["arkit"]
    if not isinstance(arkit, dict):
        raise ValidationError("arkit must be a JSON object")
    unknown = [k for k in arkit if k not in ACTION_INDEX]
    if unknown:
        raise ValidationError(f"arkit has unknown key: {unknown[0]}")
    missing = [name for name in ACTIONS if name not in arkit]
    if missing:
        raise ValidationError(f"arkit missing key: {missing[0]}")
    values = {}
    for name in ACTIONS:
        raw = arkit[name]
        if not isinstance(raw, _RawNumber):
            raise ValidationError(f"arkit value for {name} is not numeric")
        if not _THREE_DECIMALS.match(raw.text):
            raise ValidationError(
                f"arkit value for {name} must have exactly three decimals, got {raw.text!r}"
            )
        values[name] = float(raw.text)

    description = description_from_wire(doc["analysis"])
    return ParsedTarget(
        description=description,
        action_values=ActionValueSet(values),
        repairs=(),
    )


_DEFAULT_DESCRIPTION = dict(
    expression_type="unspecified",
    muscle_movements=(),
    emotion_cue=None,
    symmetry_pattern="unspecified",
)


def _parse_lenient(text: str) -> ParsedTarget:
    doc, _span = extract_first_object(text)
    repairs: list[tuple[str, str, str]] = []

    analysis = doc.get("analysis")
    if isinstance(analysis, dict):
        description = description_from_wire(analysis, lenient=True, repairs=repairs)
    else:
        repairs.append(("fill", "analysis", "missing or malformed; defaulted"))
        description = SemanticDescription(**_DEFAULT_DESCRIPTION)

    arkit = doc.get("arkit")
    if not isinstance(arkit, dict):
        repairs.append(("fill", "arkit", "missing or malformed; all values zero"))
        arkit = {}
    values = {}
    for key in arkit:
        if key not in ACTION_INDEX:
            repairs.append(("drop", key, "unknown arkit key"))
    for name in ACTIONS:
        raw = arkit.get(name)
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or not math.isfinite(raw):
            if name in arkit:
                repairs.append(("fill", name, f"non-numeric value {raw!r}; set to 0.0"))
            else:
                repairs.append(("fill", name, "missing key; set to 0.0"))
            values[name] = 0.0
            continue
        value = float(raw)
        lo, hi = (-1.0, 1.0) if name in HEAD_MOTION_ACTIONS else (0.0, 1.0)
        if value < lo or value > hi:
            clamped = min(max(value, lo), hi)
            repairs.append(("clamp", name, f"{value} clamped to {clamped}"))
            value = clamped
        values[name] = value
    return ParsedTarget(
        description=description,
        action_values=ActionValueSet(values),
        repairs=tuple(repairs),
    )


def parse_prediction(text: str, mode: str = "strict") -> ParsedTarget:
    """Decode predictor output into a (description, action-value set) pair.

    strict: the text must be exactly one JSON object meeting every wire
    invariant; violations raise naming the offending key. lenient: the first
    JSON object in the text is used, missing coefficients are filled with
    0.0, and out-of-range values are clamped to their channel range, all
    recorded as repairs.
    """
    if mode == "strict":
        return _parse_strict(text)
    if mode == "lenient":
        return _parse_lenient(text)
    raise ValidationError(f"unknown parse mode: {mode}")


def validate_coefficients(s: ActionValueSet) -> list[Violation]:
    """Range check every channel; violations are data, not failures."""
    violations = []
    for name in ACTIONS:
        value = s[name]
        lo, hi = (-1.0, 1.0) if name in HEAD_MOTION_ACTIONS else (0.0, 1.0)
        if value < lo or value > hi:
            violations.append(
                Violation(key=name, value=value, rule=f"value outside [{lo}, {hi}]")
            )
    return violations


def target_schema() -> dict:
    """The shipped machine-readable wire schema."""
    with resources.files("faceact.data").joinpath("target_schema.json").open() as fh:
        return json.load(fh)


def render_quantized(value: float) -> str:
    """Public alias for the three-decimal rendering rule."""
    return format_value(value)

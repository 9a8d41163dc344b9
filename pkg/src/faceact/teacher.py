"""Semantic supervision: turn an action-value set into a structured description.

Two teachers share one output type: a remote text-completion service driven
by the FACS prompt below, and a deterministic rule-based teacher so the full
pipeline (and every test) runs with no network dependency. Descriptions are
cached offline and reused; the cache key covers the prompt version so prompt
edits invalidate stale supervision.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from typing import Mapping, Protocol

from .actions import ACTION_INDEX, REGION_BY_ACTION, REGIONS, symmetry_pairs
from .errors import ParseError, ServiceError, ValidationError
from .frames import ActionValueSet

__all__ = [
    "SemanticDescription",
    "MuscleMovement",
    "STAGE1_PROMPT",
    "PROMPT_VERSION",
    "INTENSITY_LEVELS",
    "build_stage1_prompt",
    "intensity_bucket",
    "rule_based_description",
    "generate_description",
    "TeacherResult",
    "TeacherCache",
    "CompletionClient",
    "description_to_wire",
    "description_from_wire",
]

STAGE1_PROMPT = (
    "You are an expert in facial action coding (FACS).\n"
    "\n"
    "Given ARKit blendshape coefficients, infer:\n"
    "\n"
    "1. The most likely facial expression category.\n"
    "2. The detailed facial muscle movements.\n"
    "3. The emotional implication if clearly observable.\n"
    "4. The symmetry or asymmetry of the expression.\n"
    "\n"
    "Base your reasoning only on facial muscle movement intensity.\n"
    "\n"
    "Input: ARKit coefficient JSON."
)

PROMPT_VERSION = "1"

INTENSITY_LEVELS = ("slight", "moderate", "strong")

# Activation tiers: below the floor an action is not mentioned at all.
_ACTIVE_FLOOR = 0.1
_MODERATE_FLOOR = 0.3
_STRONG_FLOOR = 0.6

# Bilateral pairs whose values must track within this margin to count as symmetric.
_SYMMETRY_MARGIN = 0.1


@dataclass(frozen=True)
class MuscleMovement:
    region: str
    action: str
    intensity: str

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ValidationError(f"unknown region: {self.region}")
        if self.action not in ACTION_INDEX:
            raise ValidationError(f"unknown action name: {self.action}")
        if self.intensity not in INTENSITY_LEVELS:
            raise ValidationError(f"unknown intensity: {self.intensity}")


@dataclass(frozen=True)
class SemanticDescription:
    """Hierarchical description: expression type, movements, optional emotion cue, symmetry."""

    expression_type: str
    muscle_movements: tuple[MuscleMovement, ...]
    emotion_cue: str | None
    symmetry_pattern: str

    def __post_init__(self):
        if not self.expression_type:
            raise ValidationError("expression_type must be non-empty")
        if self.emotion_cue == "":
            raise ValidationError("emotion_cue is either absent or non-empty")
        if not self.symmetry_pattern:
            raise ValidationError("symmetry_pattern must be non-empty")
        object.__setattr__(self, "muscle_movements", tuple(self.muscle_movements))


def intensity_bucket(value: float) -> str | None:
    """Map an activation level to its tier; None below the mention floor."""
    if value >= _STRONG_FLOOR:
        return "strong"
    if value >= _MODERATE_FLOOR:
        return "moderate"
    if value >= _ACTIVE_FLOOR:
        return "slight"
    return None


def _expression_type(s: Mapping[str, float], movements) -> str:
    if (
        s["MouthSmileLeft"] >= _MODERATE_FLOOR
        and s["MouthSmileRight"] >= _MODERATE_FLOOR
    ):
        return "smiling"
    if s["JawOpen"] >= _STRONG_FLOOR:
        return "mouth wide open"
    if (
        s["BrowDownLeft"] >= _MODERATE_FLOOR
        and s["BrowDownRight"] >= _MODERATE_FLOOR
        and max(s["MouthFrownLeft"], s["MouthFrownRight"]) >= _ACTIVE_FLOOR
    ):
        return "frowning"
    if s["EyeBlinkLeft"] >= _STRONG_FLOOR and s["EyeBlinkRight"] >= _STRONG_FLOOR:
        return "eyes closed"
    if not movements:
        return "neutral"
    totals = {region: 0.0 for region in REGIONS}
    for m in movements:
        totals[m.region] += s[m.action]
    best = max(REGIONS, key=lambda r: (totals[r], -REGIONS.index(r)))
    labels = {
        "eyebrows": "eyebrow movement",
        "eyes": "eye movement",
        "cheeks": "cheek movement",
        "mouth": "mouth movement",
        "jaw": "jaw movement",
    }
    return labels[best]


def _emotion_cue(s: Mapping[str, float], expression_type: str) -> str | None:
    if expression_type == "smiling":
        return "happy"
    if (
        s["BrowDownLeft"] >= _MODERATE_FLOOR
        and s["BrowDownRight"] >= _MODERATE_FLOOR
        and max(s["MouthFrownLeft"], s["MouthFrownRight"]) >= _ACTIVE_FLOOR
    ):
        return "displeased"
    return None


def _symmetry_pattern(s: Mapping[str, float]) -> str:
    worst_pair = None
    worst_gap = 0.0
    for left, right in symmetry_pairs():
        gap = abs(s[left] - s[right])
        if gap > worst_gap:
            worst_gap = gap
            worst_pair = (left, right)
    if worst_pair is None or worst_gap < _SYMMETRY_MARGIN:
        return "symmetric"
    return f"asymmetric: {worst_pair[0]} vs {worst_pair[1]}"


def rule_based_description(s: ActionValueSet) -> SemanticDescription:
    """Deterministic teacher: threshold rules over the coefficient set.

    Only blendshape channels are described; the signed head/eye rotations
    carry no muscle semantics.
    """
    movements = []
    for name, region in REGION_BY_ACTION.items():
        bucket = intensity_bucket(s[name])
        if bucket is not None:
            movements.append(MuscleMovement(region=region, action=name, intensity=bucket))
    movements = tuple(movements)
    expression = _expression_type(s.entries, movements)
    return SemanticDescription(
        expression_type=expression,
        muscle_movements=movements,
        emotion_cue=_emotion_cue(s.entries, expression),
        symmetry_pattern=_symmetry_pattern(s.entries),
    )


def build_stage1_prompt(s: ActionValueSet) -> str:
    """The FACS instruction block followed by the registry-ordered coefficient JSON."""
    return STAGE1_PROMPT + "\n\n" + s.canonical_json()


# --- wire form (shared with the target codec) ---------------------------------

_WIRE_EXPRESSION = "expression_category"
_WIRE_MOVEMENTS = "muscle_movements"
_WIRE_EMOTION = "emotional_implication"
_WIRE_SYMMETRY = "symmetry"

ANALYSIS_KEYS = (_WIRE_EXPRESSION, _WIRE_MOVEMENTS, _WIRE_EMOTION, _WIRE_SYMMETRY)

# Field-name spellings accepted in lenient parsing only.
_ANALYSIS_ALIASES = {
    "expression_type": _WIRE_EXPRESSION,
    "emotion_cue": _WIRE_EMOTION,
    "symmetry_pattern": _WIRE_SYMMETRY,
}


def description_to_wire(desc: SemanticDescription) -> dict:
    return {
        _WIRE_EXPRESSION: desc.expression_type,
        _WIRE_MOVEMENTS: [
            {"region": m.region, "action": m.action, "intensity": m.intensity}
            for m in desc.muscle_movements
        ],
        _WIRE_EMOTION: desc.emotion_cue,
        _WIRE_SYMMETRY: desc.symmetry_pattern,
    }


def description_from_wire(doc, *, lenient: bool = False, repairs: list | None = None):
    """Decode the analysis object; strict mode rejects any deviation.

    In lenient mode alias keys are accepted, malformed movement entries are
    dropped, and missing fields fall back to "unspecified"; every repair is
    appended to ``repairs``.
    """
    if not isinstance(doc, dict):
        raise ParseError("analysis must be a JSON object")
    data = dict(doc)
    if lenient:
        for alias, target in _ANALYSIS_ALIASES.items():
            if alias in data and target not in data:
                data[target] = data.pop(alias)
                if repairs is not None:
                    repairs.append(("analysis-alias", alias, f"renamed to {target}"))
    else:
        extra = set(data) - set(ANALYSIS_KEYS)
        if extra:
            raise ParseError(f"analysis has unexpected key: {sorted(extra)[0]}")
        missing = set(ANALYSIS_KEYS) - set(data)
        if missing:
            raise ParseError(f"analysis missing key: {sorted(missing)[0]}")

    def _text(key: str) -> str:
        value = data.get(key)
        if isinstance(value, str) and value:
            return value
        if lenient:
            if repairs is not None:
                repairs.append(("analysis-fill", key, "missing or empty; set to unspecified"))
            return "unspecified"
        raise ParseError(f"analysis {key} must be a non-empty string")

    expression = _text(_WIRE_EXPRESSION)
    symmetry = _text(_WIRE_SYMMETRY)

    emotion = data.get(_WIRE_EMOTION)
    if emotion is not None and (not isinstance(emotion, str) or emotion == ""):
        if lenient:
            if repairs is not None:
                repairs.append(("analysis-fill", _WIRE_EMOTION, "invalid value; dropped"))
            emotion = None
        else:
            raise ParseError(f"analysis {_WIRE_EMOTION} must be null or a non-empty string")

    raw_movements = data.get(_WIRE_MOVEMENTS, [])
    if not isinstance(raw_movements, list):
        if lenient:
            if repairs is not None:
                repairs.append(("analysis-fill", _WIRE_MOVEMENTS, "not a list; dropped"))
            raw_movements = []
        else:
            raise ParseError(f"analysis {_WIRE_MOVEMENTS} must be a list")
    movements = []
    for entry in raw_movements:
        try:
            if not isinstance(entry, dict):
                raise ValidationError("movement entry must be an object")
            extra_keys = set(entry) - {"region", "action", "intensity"}
            if extra_keys and not lenient:
                raise ValidationError(f"movement entry has unexpected key: {sorted(extra_keys)[0]}")
            movements.append(
                MuscleMovement(
                    region=entry.get("region"),
                    action=entry.get("action"),
                    intensity=entry.get("intensity"),
                )
            )
        except ValidationError as exc:
            if lenient:
                if repairs is not None:
                    repairs.append(("analysis-drop", _WIRE_MOVEMENTS, str(exc)))
                continue
            raise ParseError(f"invalid muscle movement: {exc}") from exc
    return SemanticDescription(
        expression_type=expression,
        muscle_movements=tuple(movements),
        emotion_cue=emotion,
        symmetry_pattern=symmetry,
    )


# --- caching and the service teacher -------------------------------------------


class CompletionClient(Protocol):
    def complete(self, prompt: str) -> str: ...


def cache_key(s: ActionValueSet, prompt_version: str = PROMPT_VERSION) -> str:
    payload = s.canonical_json() + "\n" + prompt_version
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class TeacherResult:
    description: SemanticDescription
    provenance: str  # "service" or "rule_based"
    cache_hit: bool = False


class TeacherCache:
    """Append-only JSONL cache; safe for concurrent reads, writes serialized."""

    def __init__(self, path=None):
        self.path = str(path) if path is not None else None
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path and os.path.exists(self.path):
            with open(self.path) as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    doc = json.loads(line)
                    if "_meta" in doc:
                        continue
                    self._entries[doc["key"]] = doc

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> TeacherResult | None:
        doc = self._entries.get(key)
        if doc is None:
            return None
        desc = description_from_wire(doc["description"])
        return TeacherResult(description=desc, provenance=doc["provenance"], cache_hit=True)

    def put(self, key: str, result: TeacherResult, prompt_version: str = PROMPT_VERSION) -> None:
        doc = {
            "key": key,
            "description": description_to_wire(result.description),
            "provenance": result.provenance,
            "prompt_version": prompt_version,
        }
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = doc
            if self.path:
                with open(self.path, "a") as fh:
                    fh.write(json.dumps(doc, sort_keys=True) + "\n")


def _parse_service_reply(text: str) -> SemanticDescription:
    # Replies may wrap the JSON object in prose; take the first object found.
    # Accept either a bare analysis object or the full two-key target shape.
    from .codec import extract_first_object

    doc, _ = extract_first_object(text)
    if isinstance(doc.get("analysis"), dict):
        doc = doc["analysis"]
    expression_keys = {_WIRE_EXPRESSION} | {
        alias for alias, target in _ANALYSIS_ALIASES.items() if target == _WIRE_EXPRESSION
    }
    if not expression_keys & set(doc):
        raise ParseError("reply has no expression field")
    repairs: list = []
    return description_from_wire(doc, lenient=True, repairs=repairs)


def generate_description(
    s: ActionValueSet,
    client: CompletionClient,
    *,
    cache: TeacherCache | None = None,
    retries: int = 3,
    fallback: bool = True,
    prompt_version: str = PROMPT_VERSION,
) -> TeacherResult:
    """Ask the service teacher for a description, with cache and fallback.

    The reply must contain a decodable analysis object; after ``retries``
    failed attempts the rule-based teacher takes over (unless ``fallback``
    is disabled, in which case the parse error propagates). Transport
    failures surface as ServiceError.
    """
    key = cache_key(s, prompt_version)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    prompt = build_stage1_prompt(s)
    last_error: Exception | None = None
    for _ in range(max(1, retries)):
        try:
            reply = client.complete(prompt)
        except ServiceError:
            raise
        try:
            description = _parse_service_reply(reply)
            result = TeacherResult(description=description, provenance="service")
            if cache is not None:
                cache.put(key, result, prompt_version)
            return result
        except (ParseError, ValidationError) as exc:
            last_error = exc
    if not fallback:
        raise ParseError(f"teacher reply unusable after {retries} attempts: {last_error}")
    result = TeacherResult(description=rule_based_description(s), provenance="rule_based")
    if cache is not None:
        cache.put(key, result, prompt_version)
    return result

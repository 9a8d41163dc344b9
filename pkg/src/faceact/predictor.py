"""Uniform interface to any image-to-target predictor, plus offline stubs.

A predictor client exposes ``complete(image_ref, prompt) -> str``; the text
is parsed leniently by default since live model output tends to wrap JSON
in prose. The stubs make end-to-end evaluation runnable at desk scale with
no model in the loop.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol

import numpy as np

from .actions import ACTIONS, HEAD_MOTION_MASK
from .codec import encode_target, parse_prediction
from .errors import ParseError, ValidationError
from .frames import ActionValueSet
from .teacher import SemanticDescription, rule_based_description
from .util import read_jsonl, write_jsonl

__all__ = [
    "INFERENCE_PROMPT",
    "PredictionRecord",
    "PredictorClient",
    "predict",
    "stub_neutral",
    "stub_noisy_oracle",
    "write_predictions",
    "read_predictions",
]

INFERENCE_PROMPT = (
    "You are an expert in Facial Action Coding System (FACS) and ARKit facial "
    "expression analysis.\n"
    "\n"
    "Given a facial image, provide a two-part analysis.\n"
    "\n"
    'Part 1: "analysis"\n'
    "Analyze the facial expression with the following structure:\n"
    "- expression_category: the most likely facial expression category\n"
    "- muscle_movements: detailed facial muscle movements with intensity "
    "(by region: eyebrows, eyes, cheeks, mouth, jaw)\n"
    "- emotional_implication: emotional meaning only if clearly observable "
    "from facial muscles\n"
    "- symmetry: describe left-right facial symmetry or any notable asymmetry\n"
    "\n"
    'Part 2: "arkit"\n'
    "Generate a complete JSON object mapping every ARKit blendshape "
    "coefficient name to a precise value with three decimal places.\n"
    "\n"
    "Requirements:\n"
    '- Return only a valid JSON object with two keys: "analysis" and "arkit".\n'
    '- The "arkit" field must contain all 61 ARKit coefficients.'
)


class PredictorClient(Protocol):
    def complete(self, image_ref: str, prompt: str) -> str: ...


@dataclass(frozen=True)
class PredictionRecord:
    """One prediction: raw service text plus its parsed form, if any."""

    image_ref: str
    raw_text: str
    description: SemanticDescription | None
    values: ActionValueSet | None
    repairs: tuple[tuple[str, str, str], ...]
    latency: float
    error: str | None = None

    @property
    def parsed(self):
        if self.values is None:
            return None
        return (self.description, self.values)


def predict(
    image_ref: str,
    client: PredictorClient,
    prompt: str = INFERENCE_PROMPT,
    mode: str = "lenient",
) -> PredictionRecord:
    """Run one prediction; parse failures become data, transport failures raise."""
    start = time.perf_counter()
    raw_text = client.complete(image_ref, prompt)
    latency = time.perf_counter() - start
    try:
        parsed = parse_prediction(raw_text, mode=mode)
    except (ParseError, ValidationError) as exc:
        return PredictionRecord(
            image_ref=image_ref,
            raw_text=raw_text,
            description=None,
            values=None,
            repairs=(),
            latency=latency,
            error=str(exc),
        )
    return PredictionRecord(
        image_ref=image_ref,
        raw_text=raw_text,
        description=parsed.description,
        values=parsed.action_values,
        repairs=parsed.repairs,
        latency=latency,
    )


class _StubNeutral:
    def __init__(self):
        zero = ActionValueSet.from_values(np.zeros(len(ACTIONS)))
        self._text = encode_target(rule_based_description(zero), zero).raw_text

    def complete(self, image_ref: str, prompt: str) -> str:
        return self._text


def stub_neutral() -> PredictorClient:
    """Predictor that always emits the all-zero target."""
    return _StubNeutral()


GroundTruth = ActionValueSet | Mapping[str, ActionValueSet] | Callable[[str], ActionValueSet]


class _StubNoisyOracle:
    def __init__(self, gt: GroundTruth, sigma: float, seed: int):
        if sigma < 0:
            raise ValidationError("sigma must be non-negative")
        self._gt = gt
        self._sigma = float(sigma)
        self._seed = int(seed)

    def _resolve(self, image_ref: str) -> ActionValueSet:
        if isinstance(self._gt, ActionValueSet):
            return self._gt
        if callable(self._gt):
            return self._gt(image_ref)
        try:
            return self._gt[image_ref]
        except KeyError:
            raise ValidationError(f"unknown image reference: {image_ref}") from None

    def complete(self, image_ref: str, prompt: str) -> str:
        gt = self._resolve(image_ref)
        # Per-image RNG keyed on (seed, image_ref): deterministic and
        # independent of call order.
        digest = hashlib.sha256(f"{self._seed}|{image_ref}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        values = gt.values_array()
        if self._sigma > 0:
            values = values + rng.normal(0.0, self._sigma, size=values.shape)
        blend = ~HEAD_MOTION_MASK
        values[blend] = np.clip(values[blend], 0.0, 1.0)
        values[HEAD_MOTION_MASK] = np.clip(values[HEAD_MOTION_MASK], -1.0, 1.0)
        noisy = ActionValueSet.from_values(values)
        return encode_target(rule_based_description(noisy), noisy).raw_text


def stub_noisy_oracle(gt: GroundTruth, sigma: float, seed: int) -> PredictorClient:
    """Predictor emitting ground truth plus seeded Gaussian noise, channel-clamped."""
    return _StubNoisyOracle(gt, sigma, seed)


def record_to_json(record: PredictionRecord) -> dict:
    from .teacher import description_to_wire

    return {
        "image_ref": record.image_ref,
        "raw_text": record.raw_text,
        "description": (
            description_to_wire(record.description) if record.description else None
        ),
        "values": (
            record.values.values_array().tolist() if record.values is not None else None
        ),
        "repairs": [list(r) for r in record.repairs],
        "latency": record.latency,
        "error": record.error,
    }


def record_from_json(doc: dict) -> PredictionRecord:
    from .teacher import description_from_wire

    description = None
    if doc.get("description") is not None:
        description = description_from_wire(doc["description"])
    values = None
    if doc.get("values") is not None:
        values = ActionValueSet.from_values(doc["values"])
    return PredictionRecord(
        image_ref=doc["image_ref"],
        raw_text=doc["raw_text"],
        description=description,
        values=values,
        repairs=tuple(tuple(r) for r in doc.get("repairs", [])),
        latency=float(doc.get("latency", 0.0)),
        error=doc.get("error"),
    )


def write_predictions(path, records, meta: dict | None = None) -> None:
    write_jsonl(path, (record_to_json(r) for r in records), meta)


def read_predictions(path) -> list[PredictionRecord]:
    _, docs = read_jsonl(path)
    return [record_from_json(doc) for doc in docs]

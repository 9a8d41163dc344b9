"""Coefficient frames, action-value sets, and neutral-baseline calibration.

A frame is one 61-dimensional vector in registry order; an action-value set
is the same data keyed by canonical action name. Both are immutable after
construction and reject non-finite values outright.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .actions import (
    ACTION_COUNT,
    ACTION_INDEX,
    ACTIONS,
    DOMINANT_13_INDICES,
    HEAD_MOTION_MASK,
)
from .errors import StructuralError, ValidationError

__all__ = [
    "CoefficientFrame",
    "ActionValueSet",
    "calibrate",
    "dominant13",
    "NeutralCalibrator",
    "check_vector",
    "check_matrix",
    "format_value",
    "read_frame_file",
    "ZERO_FRAME",
]


def check_vector(values, *, name: str = "values") -> np.ndarray:
    """Validate one 61-coefficient vector; returns a float64 copy."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != ACTION_COUNT:
        raise StructuralError(
            f"{name} must have exactly {ACTION_COUNT} entries, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValidationError(f"{name} contains a non-finite value at {ACTIONS[bad]}")
    return arr.copy()


def check_matrix(X, *, name: str = "X") -> np.ndarray:
    """Validate an (n_frames, 61) coefficient matrix; returns a float64 copy."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != ACTION_COUNT:
        raise StructuralError(
            f"{name} must have shape (n, {ACTION_COUNT}), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr.copy()


def format_value(value: float) -> str:
    """Render a coefficient with exactly three decimals, ties away from zero."""
    q = Decimal(repr(float(value))).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP)
    if q.is_zero():
        return "0.000"
    return str(q)


@dataclass(frozen=True, eq=False)
class CoefficientFrame:
    """One 61-dimensional action-value vector in registry order."""

    values: np.ndarray
    timestamp: float | None = None

    def __post_init__(self):
        arr = check_vector(self.values)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def zero(cls) -> "CoefficientFrame":
        return cls(np.zeros(ACTION_COUNT))

    @classmethod
    def from_mapping(cls, entries: Mapping[str, float], timestamp: float | None = None) -> "CoefficientFrame":
        _check_keys(entries)
        return cls(np.array([float(entries[name]) for name in ACTIONS]), timestamp)

    def value(self, name: str) -> float:
        try:
            return float(self.values[ACTION_INDEX[name]])
        except KeyError:
            raise ValidationError(f"unknown action name: {name}") from None

    def to_action_values(self) -> "ActionValueSet":
        return ActionValueSet.from_frame(self)

    def __eq__(self, other):
        if not isinstance(other, CoefficientFrame):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values)) and self.timestamp == other.timestamp


def _check_keys(entries: Mapping[str, float]) -> None:
    keys = set(entries)
    unknown = keys - set(ACTIONS)
    if unknown:
        raise ValidationError(f"unknown action name: {sorted(unknown)[0]}")
    missing = set(ACTIONS) - keys
    if missing:
        raise ValidationError(f"missing action name: {sorted(missing)[0]}")


@dataclass(frozen=True)
class ActionValueSet:
    """All 61 coefficients keyed by canonical action name.

    Bijective with :class:`CoefficientFrame`; iteration follows registry
    order regardless of the mapping passed in.
    """

    entries: Mapping[str, float]

    def __post_init__(self):
        _check_keys(self.entries)
        ordered = {name: float(self.entries[name]) for name in ACTIONS}
        for name, v in ordered.items():
            if not np.isfinite(v):
                raise ValidationError(f"non-finite value for {name}")
        object.__setattr__(self, "entries", ordered)

    @classmethod
    def from_frame(cls, frame: CoefficientFrame) -> "ActionValueSet":
        return cls(dict(zip(ACTIONS, frame.values.tolist())))

    @classmethod
    def from_values(cls, values) -> "ActionValueSet":
        return cls.from_frame(CoefficientFrame(values))

    def to_frame(self, timestamp: float | None = None) -> CoefficientFrame:
        return CoefficientFrame(self.values_array(), timestamp)

    def values_array(self) -> np.ndarray:
        return np.array([self.entries[name] for name in ACTIONS])

    def __getitem__(self, name: str) -> float:
        return self.entries[name]

    def canonical_json(self) -> str:
        """Registry-ordered JSON with every value rendered to three decimals."""
        parts = ", ".join(
            f'"{name}": {format_value(self.entries[name])}' for name in ACTIONS
        )
        return "{" + parts + "}"


ZERO_FRAME = CoefficientFrame.zero()


def _calibrate_array(raw: np.ndarray, neutral: np.ndarray) -> np.ndarray:
    out = raw - neutral
    blend = ~HEAD_MOTION_MASK
    out[blend] = np.clip(out[blend], 0.0, 1.0)
    out[HEAD_MOTION_MASK] = np.clip(out[HEAD_MOTION_MASK], -1.0, 1.0)
    return out


def calibrate(raw: CoefficientFrame, neutral: CoefficientFrame) -> CoefficientFrame:
    """Subtract the neutral baseline so values encode pure expressive motion.

    Blendshape channels are clamped to [0, 1] after subtraction; the signed
    head/eye channels to [-1, 1].
    """
    raw_arr = raw.values if isinstance(raw, CoefficientFrame) else check_vector(raw, name="raw")
    neutral_arr = (
        neutral.values if isinstance(neutral, CoefficientFrame) else check_vector(neutral, name="neutral")
    )
    if raw_arr.shape != neutral_arr.shape:
        raise StructuralError("raw and neutral frames disagree in length")
    ts = raw.timestamp if isinstance(raw, CoefficientFrame) else None
    return CoefficientFrame(_calibrate_array(raw_arr.copy(), neutral_arr), ts)


def dominant13(frame: CoefficientFrame) -> np.ndarray:
    """Extract the dominant-13 blendshape values in their fixed order."""
    arr = frame.values if isinstance(frame, CoefficientFrame) else check_vector(frame, name="frame")
    return arr[DOMINANT_13_INDICES].copy()


class NeutralCalibrator(BaseEstimator, TransformerMixin):
    """Transformer applying neutral-baseline calibration to coefficient rows.

    ``fit`` takes the neutral frame (a single 61-vector or a 1x61 matrix);
    ``transform`` calibrates any (n, 61) matrix against it.
    """

    def fit(self, X, y=None):
        arr = check_matrix(X, name="neutral")
        if arr.shape[0] != 1:
            raise StructuralError("fit expects exactly one neutral frame")
        self.neutral_ = arr[0]
        return self

    def transform(self, X):
        if not hasattr(self, "neutral_"):
            raise ValidationError("NeutralCalibrator is not fitted")
        out = check_matrix(X)
        for i in range(out.shape[0]):
            out[i] = _calibrate_array(out[i], self.neutral_)
        return out


def _frame_from_record(record: Mapping[str, str], where: str) -> CoefficientFrame:
    try:
        converted = {k: float(v) for k, v in record.items()}
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: non-numeric coefficient value") from exc
    _check_keys(converted)
    return CoefficientFrame.from_mapping(converted)


def read_frames_csv(path) -> list[CoefficientFrame]:
    """Read frames from a CSV whose header row lists the 61 action names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty frame file") from None
        if len(header) != len(set(header)):
            raise ValidationError(f"{path}: duplicate column in header")
        _check_keys({name: 0.0 for name in header})
        frames = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise StructuralError(f"{path}:{lineno}: wrong field count")
            frames.append(_frame_from_record(dict(zip(header, row)), f"{path}:{lineno}"))
    return frames


def read_frames_jsonl(path) -> list[CoefficientFrame]:
    """Read frames from line-delimited JSON objects keyed by action name."""
    frames = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON") from exc
            if not isinstance(record, dict):
                raise ValidationError(f"{path}:{lineno}: expected a JSON object")
            frames.append(_frame_from_record(record, f"{path}:{lineno}"))
    return frames


def read_frame_file(path) -> list[CoefficientFrame]:
    """Dispatch on extension: .csv or .jsonl/.ndjson/.json lines."""
    text = str(path)
    if text.endswith(".csv"):
        return read_frames_csv(path)
    return read_frames_jsonl(path)

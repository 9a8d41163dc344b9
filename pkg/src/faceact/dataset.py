"""Recording-session ingestion, subsampling, and subject-disjoint splitting.

Sessions are calibrated at ingestion so every downstream stage sees
baseline-subtracted frames only. Subsampling strides indices rather than
timestamps: deterministic and rate-exact for constant-fps capture.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigError, StructuralError, ValidationError
from .frames import CoefficientFrame, calibrate, read_frame_file
from .util import read_jsonl, write_jsonl

EMOTIONS: tuple[str, ...] = (
    "happiness",
    "neutral",
    "sadness",
    "anger",
    "fear",
    "surprise",
    "disgust",
)

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class EmotionVector:
    """Normalized seven-emotion intensity vector (sums to one)."""

    intensities: tuple[float, ...]

    def __post_init__(self):
        if len(self.intensities) != len(EMOTIONS):
            raise StructuralError(f"expected {len(EMOTIONS)} intensities")
        if any(v < 0 for v in self.intensities):
            raise ValidationError("emotion intensities must be non-negative")
        if abs(sum(self.intensities) - 1.0) > 1e-9:
            raise ValidationError("emotion intensities must sum to one")

    @property
    def dominant(self) -> str:
        """Highest-intensity emotion; ties break toward the lowest index."""
        best = max(range(len(EMOTIONS)), key=lambda i: (self.intensities[i], -i))
        return EMOTIONS[best]


def normalize_emotion(raw) -> EmotionVector:
    """Scale raw non-negative intensities so they sum to one."""
    values = [float(v) for v in raw]
    if len(values) != len(EMOTIONS):
        raise StructuralError(f"expected {len(EMOTIONS)} intensities, got {len(values)}")
    if any(not math.isfinite(v) for v in values):
        raise ValidationError("emotion intensities must be finite")
    if any(v < 0 for v in values):
        raise ValidationError("emotion intensities must be non-negative")
    total = sum(values)
    if total <= 0:
        raise ValidationError("emotion intensities are all zero")
    return EmotionVector(tuple(v / total for v in values))


@dataclass(frozen=True)
class RecordingSession:
    """One capture session: aligned frames and image references plus a neutral baseline."""

    subject_id: str
    sequence_id: str
    fps: float
    frames: tuple[CoefficientFrame, ...]
    neutral: CoefficientFrame
    image_refs: tuple[str, ...]
    emotion: EmotionVector | None = None

    def __post_init__(self):
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        if not self.frames:
            raise ValidationError("session has no frames")
        if len(self.image_refs) != len(self.frames):
            raise StructuralError(
                f"image_refs ({len(self.image_refs)}) and frames ({len(self.frames)}) misaligned"
            )


def calibrate_session(session: RecordingSession) -> RecordingSession:
    """Return the session with every frame calibrated against its neutral."""
    frames = tuple(calibrate(f, session.neutral) for f in session.frames)
    return RecordingSession(
        subject_id=session.subject_id,
        sequence_id=session.sequence_id,
        fps=session.fps,
        frames=frames,
        neutral=session.neutral,
        image_refs=session.image_refs,
        emotion=session.emotion,
    )


def subsample(session: RecordingSession, target_fps: float) -> list[tuple[str, CoefficientFrame]]:
    """Select frames at indices floor(i * fps / target_fps), deduplicated.

    Keeps the first frame of each sampling window; pairs stay aligned with
    their image references.
    """
    if target_fps <= 0:
        raise ValidationError("target_fps must be positive")
    if target_fps > session.fps:
        raise ValidationError(
            f"target_fps {target_fps} exceeds session fps {session.fps}"
        )
    n = len(session.frames)
    stride = session.fps / target_fps
    picked: list[int] = []
    i = 0
    while True:
        idx = math.floor(i * stride)
        if idx >= n:
            break
        if not picked or idx != picked[-1]:
            picked.append(idx)
        i += 1
    return [(session.image_refs[j], session.frames[j]) for j in picked]


@dataclass(frozen=True)
class SplitRecord:
    image_ref: str
    frame: CoefficientFrame
    subject_id: str
    sequence_id: str
    emotion: EmotionVector | None = None


@dataclass
class DatasetSplit:
    """Train/val/test pairs routed by subject assignment."""

    train: list[SplitRecord] = field(default_factory=list)
    val: list[SplitRecord] = field(default_factory=list)
    test: list[SplitRecord] = field(default_factory=list)
    assignment: dict[str, str] = field(default_factory=dict)

    def part(self, name: str) -> list[SplitRecord]:
        if name not in SPLIT_NAMES:
            raise ValidationError(f"unknown split name: {name}")
        return getattr(self, name)

    def subjects(self, name: str) -> set[str]:
        return {r.subject_id for r in self.part(name)}

    def check_disjoint(self) -> None:
        for a in SPLIT_NAMES:
            for b in SPLIT_NAMES:
                if a < b and self.subjects(a) & self.subjects(b):
                    raise ValidationError(f"subjects overlap between {a} and {b}")


def split_by_subject(
    sessions,
    assignment: dict[str, str],
    target_fps: float | None = None,
) -> DatasetSplit:
    """Route every session's (image_ref, frame) pairs per subject assignment.

    Disjointness holds by construction since the assignment is a mapping.
    When ``target_fps`` is given each session is subsampled first.
    """
    for name in set(assignment.values()):
        if name not in SPLIT_NAMES:
            raise ConfigError(f"unknown split name in assignment: {name}")
    split = DatasetSplit(assignment=dict(assignment))
    for session in sessions:
        if session.subject_id not in assignment:
            raise ConfigError(f"subject not assigned to any split: {session.subject_id}")
        bucket = split.part(assignment[session.subject_id])
        if target_fps is None:
            pairs = list(zip(session.image_refs, session.frames))
        else:
            pairs = subsample(session, target_fps)
        for image_ref, frame in pairs:
            bucket.append(
                SplitRecord(
                    image_ref=image_ref,
                    frame=frame,
                    subject_id=session.subject_id,
                    sequence_id=session.sequence_id,
                    emotion=session.emotion,
                )
            )
    split.check_disjoint()
    return split


def _session_image_refs(entry: dict, n_frames: int, base_dir: str) -> tuple[str, ...]:
    if "image_refs_path" in entry:
        path = os.path.join(base_dir, entry["image_refs_path"])
        with open(path) as fh:
            refs = tuple(line.strip() for line in fh if line.strip())
    elif "image_dir" in entry:
        image_dir = os.path.join(base_dir, entry["image_dir"])
        refs = tuple(
            os.path.join(entry["image_dir"], name)
            for name in sorted(os.listdir(image_dir))
        )
    else:
        refs = tuple(f"{entry['sequence_id']}/{i:06d}" for i in range(n_frames))
    if len(refs) != n_frames:
        raise StructuralError(
            f"session {entry['sequence_id']}: {len(refs)} image refs for {n_frames} frames"
        )
    return refs


def load_manifest(path) -> list[RecordingSession]:
    """Load sessions declared in a manifest file and calibrate them.

    The manifest is a JSON object with a ``sessions`` list; each entry names
    subject_id, sequence_id, fps, the neutral frame file, the frame file,
    and optionally an image directory / reference list and a raw emotion
    vector.
    """
    base_dir = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        manifest = json.load(fh)
    entries = manifest.get("sessions")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{path}: manifest has no sessions")
    sessions = []
    for entry in entries:
        for key in ("subject_id", "sequence_id", "fps", "neutral_path", "frames_path"):
            if key not in entry:
                raise ConfigError(f"{path}: session entry missing {key}")
        neutral_frames = read_frame_file(os.path.join(base_dir, entry["neutral_path"]))
        if len(neutral_frames) != 1:
            raise ValidationError(
                f"{entry['neutral_path']}: expected exactly one neutral frame"
            )
        frames = tuple(read_frame_file(os.path.join(base_dir, entry["frames_path"])))
        refs = _session_image_refs(entry, len(frames), base_dir)
        emotion = None
        if "emotion" in entry:
            emotion = normalize_emotion(entry["emotion"])
        session = RecordingSession(
            subject_id=str(entry["subject_id"]),
            sequence_id=str(entry["sequence_id"]),
            fps=float(entry["fps"]),
            frames=frames,
            neutral=neutral_frames[0],
            image_refs=refs,
            emotion=emotion,
        )
        sessions.append(calibrate_session(session))
    return sessions


def split_records(records, assignment: dict[str, str]) -> DatasetSplit:
    """Route flat store records by subject assignment (store-level splitting)."""
    for name in set(assignment.values()):
        if name not in SPLIT_NAMES:
            raise ConfigError(f"unknown split name in assignment: {name}")
    split = DatasetSplit(assignment=dict(assignment))
    for record in records:
        if record.subject_id not in assignment:
            raise ConfigError(f"subject not assigned to any split: {record.subject_id}")
        split.part(assignment[record.subject_id]).append(record)
    split.check_disjoint()
    return split


def record_to_json(record: SplitRecord) -> dict:
    doc = {
        "image_ref": record.image_ref,
        "subject_id": record.subject_id,
        "sequence_id": record.sequence_id,
        "values": record.frame.values.tolist(),
    }
    if record.emotion is not None:
        doc["emotion"] = list(record.emotion.intensities)
        doc["dominant_emotion"] = record.emotion.dominant
    return doc


def record_from_json(doc: dict) -> SplitRecord:
    emotion = None
    if "emotion" in doc:
        emotion = EmotionVector(tuple(doc["emotion"]))
    return SplitRecord(
        image_ref=doc["image_ref"],
        frame=CoefficientFrame(doc["values"]),
        subject_id=doc["subject_id"],
        sequence_id=doc["sequence_id"],
        emotion=emotion,
    )


def write_records(path, records, meta: dict | None = None) -> None:
    write_jsonl(path, (record_to_json(r) for r in records), meta)


def read_records(path) -> list[SplitRecord]:
    _, docs = read_jsonl(path)
    return [record_from_json(doc) for doc in docs]

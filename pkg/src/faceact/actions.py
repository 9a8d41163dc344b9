"""Canonical ARKit action registry.

61 actions total: 52 blendshape channels (activation in [0, 1] after
calibration) plus 9 signed head/eye rotation channels in [-1, 1]. The tuple
order below is the canonical serialization order used by every file format
and vector in this package; do not reorder.
"""

from __future__ import annotations

import numpy as np

BLENDSHAPE_COUNT = 52
HEAD_MOTION_COUNT = 9
ACTION_COUNT = 61

ACTIONS: tuple[str, ...] = (
    "MouthRight",
    "TongueOut",
    "LeftEyeRoll",
    "RightEyeRoll",
    "JawRight",
    "CheekPuff",
    "MouthLeft",
    "MouthFrownRight",
    "MouthFrownLeft",
    "EyeLookUpLeft",
    "EyeLookUpRight",
    "MouthShrugUpper",
    "MouthRollLower",
    "EyeLookOutLeft",
    "MouthRollUpper",
    "EyeSquintLeft",
    "EyeSquintRight",
    "MouthPressRight",
    "MouthShrugLower",
    "JawLeft",
    "MouthPressLeft",
    "EyeLookOutRight",
    "EyeLookInLeft",
    "MouthDimpleLeft",
    "MouthClose",
    "LeftEyeYaw",
    "RightEyeYaw",
    "JawForward",
    "MouthDimpleRight",
    "MouthFunnel",
    "CheekSquintRight",
    "CheekSquintLeft",
    "MouthUpperUpLeft",
    "BrowDownRight",
    "BrowDownLeft",
    "EyeLookInRight",
    "MouthUpperUpRight",
    "MouthStretchLeft",
    "JawOpen",
    "HeadRoll",
    "MouthStretchRight",
    "NoseSneerLeft",
    "HeadPitch",
    "NoseSneerRight",
    "MouthLowerDownRight",
    "HeadYaw",
    "MouthLowerDownLeft",
    "MouthSmileLeft",
    "BrowInnerUp",
    "MouthPucker",
    "MouthSmileRight",
    "LeftEyePitch",
    "RightEyePitch",
    "EyeWideRight",
    "EyeWideLeft",
    "BrowOuterUpRight",
    "BrowOuterUpLeft",
    "EyeBlinkLeft",
    "EyeBlinkRight",
    "EyeLookDownLeft",
    "EyeLookDownRight",
)

HEAD_MOTION_ACTIONS: tuple[str, ...] = (
    "HeadYaw",
    "HeadPitch",
    "HeadRoll",
    "LeftEyeYaw",
    "LeftEyePitch",
    "LeftEyeRoll",
    "RightEyeYaw",
    "RightEyePitch",
    "RightEyeRoll",
)

# The 13 most expressive blendshapes used by the cross-comparison protocol.
DOMINANT_13: tuple[str, ...] = (
    "EyeBlinkLeft",
    "EyeLookDownLeft",
    "EyeLookInLeft",
    "EyeBlinkRight",
    "EyeLookDownRight",
    "EyeLookInRight",
    "JawOpen",
    "MouthSmileLeft",
    "MouthSmileRight",
    "MouthUpperUpLeft",
    "MouthUpperUpRight",
    "BrowDownLeft",
    "BrowDownRight",
)

ACTION_INDEX: dict[str, int] = {name: i for i, name in enumerate(ACTIONS)}

# True where the channel is a signed head/eye rotation.
HEAD_MOTION_MASK: np.ndarray = np.array(
    [name in HEAD_MOTION_ACTIONS for name in ACTIONS], dtype=bool
)
HEAD_MOTION_MASK.setflags(write=False)

BLENDSHAPE_MASK: np.ndarray = ~HEAD_MOTION_MASK
BLENDSHAPE_MASK.setflags(write=False)

DOMINANT_13_INDICES: np.ndarray = np.array(
    [ACTION_INDEX[name] for name in DOMINANT_13], dtype=np.intp
)
DOMINANT_13_INDICES.setflags(write=False)

# Facial regions used by the semantic teacher; head/eye rotations have none.
REGIONS: tuple[str, ...] = ("eyebrows", "eyes", "cheeks", "mouth", "jaw")


def _region_for(name: str) -> str | None:
    if name in HEAD_MOTION_ACTIONS:
        return None
    if name.startswith("Brow"):
        return "eyebrows"
    if name.startswith("Eye"):
        return "eyes"
    if name.startswith(("Cheek", "NoseSneer")):
        return "cheeks"
    if name.startswith(("Mouth", "Tongue")):
        return "mouth"
    if name.startswith("Jaw"):
        return "jaw"
    raise AssertionError(f"unmapped action {name}")


REGION_BY_ACTION: dict[str, str] = {
    name: region
    for name in ACTIONS
    if (region := _region_for(name)) is not None
}


def symmetry_pairs() -> list[tuple[str, str]]:
    """Bilateral (left, right) action pairs.

    Every action whose name ends in ``Left`` is paired with the
    name-identical ``Right`` action; ordering follows the registry order of
    the left member. Prefix-lateral names (``LeftEyeYaw`` etc.) carry no
    suffix and are not paired.
    """
    pairs = []
    for name in ACTIONS:
        if name.endswith("Left"):
            twin = name[: -len("Left")] + "Right"
            if twin in ACTION_INDEX:
                pairs.append((name, twin))
    return pairs

from faceact.actions import (
    ACTION_COUNT,
    ACTION_INDEX,
    ACTIONS,
    BLENDSHAPE_COUNT,
    DOMINANT_13,
    HEAD_MOTION_ACTIONS,
    HEAD_MOTION_COUNT,
    HEAD_MOTION_MASK,
    REGION_BY_ACTION,
    REGIONS,
    symmetry_pairs,
)


def test_registry_counts():
    assert len(ACTIONS) == ACTION_COUNT == 61
    assert len(set(ACTIONS)) == 61
    assert BLENDSHAPE_COUNT == 52
    assert HEAD_MOTION_COUNT == 9
    assert BLENDSHAPE_COUNT + HEAD_MOTION_COUNT == ACTION_COUNT


def test_head_motion_names_exact():
    assert set(HEAD_MOTION_ACTIONS) == {
        "HeadYaw", "HeadPitch", "HeadRoll",
        "LeftEyeYaw", "LeftEyePitch", "LeftEyeRoll",
        "RightEyeYaw", "RightEyePitch", "RightEyeRoll",
    }
    assert all(name in ACTION_INDEX for name in HEAD_MOTION_ACTIONS)
    assert int(HEAD_MOTION_MASK.sum()) == 9


def test_dominant_13_exact():
    assert DOMINANT_13 == (
        "EyeBlinkLeft", "EyeLookDownLeft", "EyeLookInLeft",
        "EyeBlinkRight", "EyeLookDownRight", "EyeLookInRight",
        "JawOpen", "MouthSmileLeft", "MouthSmileRight",
        "MouthUpperUpLeft", "MouthUpperUpRight",
        "BrowDownLeft", "BrowDownRight",
    )
    assert all(name in ACTION_INDEX for name in DOMINANT_13)


def test_symmetry_pairs():
    pairs = symmetry_pairs()
    assert ("EyeBlinkLeft", "EyeBlinkRight") in pairs
    assert ("MouthSmileLeft", "MouthSmileRight") in pairs
    flat = {name for pair in pairs for name in pair}
    assert "JawOpen" not in flat
    # prefix-lateral eye rotations carry no Left/Right suffix
    assert "LeftEyeYaw" not in flat
    # unique and exhaustive over suffix-lateral names
    assert len(pairs) == len(set(pairs)) == 20
    lefts = {n for n in ACTIONS if n.endswith("Left")}
    assert {p[0] for p in pairs} == lefts
    for left, right in pairs:
        assert right == left[: -len("Left")] + "Right"


def test_regions_cover_blendshapes_only():
    assert set(REGION_BY_ACTION) == set(ACTIONS) - set(HEAD_MOTION_ACTIONS)
    assert set(REGION_BY_ACTION.values()) <= set(REGIONS)
    assert REGION_BY_ACTION["BrowInnerUp"] == "eyebrows"
    assert REGION_BY_ACTION["EyeBlinkLeft"] == "eyes"
    assert REGION_BY_ACTION["CheekPuff"] == "cheeks"
    assert REGION_BY_ACTION["MouthSmileLeft"] == "mouth"
    assert REGION_BY_ACTION["JawOpen"] == "jaw"

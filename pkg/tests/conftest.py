import numpy as np
import pytest

from faceact.actions import ACTION_COUNT, HEAD_MOTION_MASK
from faceact.frames import ActionValueSet, CoefficientFrame


def random_values(rng: np.random.Generator) -> np.ndarray:
    """One in-range coefficient vector: blendshapes [0,1], head channels [-1,1]."""
    values = rng.uniform(0.0, 1.0, ACTION_COUNT)
    values[HEAD_MOTION_MASK] = rng.uniform(-1.0, 1.0, int(HEAD_MOTION_MASK.sum()))
    return values


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_frame(rng):
    return CoefficientFrame(random_values(rng))


@pytest.fixture
def random_set(rng):
    return ActionValueSet.from_values(random_values(rng))

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from disclip.backends import ToyEncoder, ToyLM, ToyWorld


@pytest.fixture
def small_world():
    """Four attributes, default fillers, period and end-of-text."""
    return ToyWorld(["aqua", "azure", "violet", "white"])


@pytest.fixture
def small_lm(small_world):
    return ToyLM(small_world)


@pytest.fixture
def small_encoder(small_world):
    return ToyEncoder(small_world)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

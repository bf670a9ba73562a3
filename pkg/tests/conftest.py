import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from liquidwarp.body_model import SYNTH_CAMERA, BodyParams, synth_model  # noqa: E402


@pytest.fixture(scope="session")
def model():
    return synth_model(2)


@pytest.fixture(scope="session")
def fine_model():
    return synth_model(8)


@pytest.fixture
def rest_params(model):
    return BodyParams(np.zeros(3 * model.n_joints), np.zeros(model.n_betas), SYNTH_CAMERA)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

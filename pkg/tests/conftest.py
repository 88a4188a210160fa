import numpy as np
import pytest
import torch

from anisosr import DecoderConfig, EncoderConfig, Volume, build_model, simulate_lr_pair
from anisosr.phantom import make_phantom

torch.set_num_threads(2)

TINY_ENC = EncoderConfig(feature_channels=8, base_channels=8, num_blocks=1,
                         layers_per_block=1, growth=4)
TINY_DEC = DecoderConfig(in_features=16, hidden=16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    return build_model(TINY_ENC, TINY_DEC, seed=3)


@pytest.fixture(scope="session")
def phantom24():
    return make_phantom(24, np.random.default_rng(42))


@pytest.fixture(scope="session")
def pair24(phantom24):
    return simulate_lr_pair(phantom24, 2.0)


@pytest.fixture
def random_volume(rng):
    def build(shape=(8, 8, 8), spacing=(1.0, 1.0, 1.0)):
        return Volume(rng.random(shape), spacing)
    return build

import numpy as np
import pytest

from ujscc.codec import ArchitectureConfig, build_codec
from ujscc.nn.rng import seeded_rng
from ujscc.pipeline import TINY, TrainConfig, build_system


@pytest.fixture
def rng():
    return seeded_rng(1234)


@pytest.fixture
def tiny_arch():
    return TINY


@pytest.fixture
def tiny_system():
    return build_system(TINY, "ujscc", seed=7)


@pytest.fixture
def tiny_cfg():
    return TrainConfig(
        alphas=(2.0, 1.0, 0.5),
        lambdas=(1.0, 1.0, 1.0),
        batch_size=8,
        max_epochs=2,
        patience=50,
        val_fraction=0.25,
        seed=3,
    )


@pytest.fixture
def small_codec(rng):
    arch = ArchitectureConfig("small", c1=4, c2=6, dims=(1, 2, 3), n_symbols=256)
    return build_codec(arch, "ujscc", rng)

"""Shared fixtures: small corpora, seeded generators and tiny networks."""

import numpy as np
import pytest

from automap.config import TrainConfig
from automap.datasets import synth_corpus
from automap.network import init_params


@pytest.fixture
def rng():
    """A fixed-seed generator for test data."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_corpus():
    """Eight synthetic 8x8 images."""
    return synth_corpus(8, 8, seed=1)


@pytest.fixture
def test_corpus():
    """Four held-out synthetic 8x8 images."""
    return synth_corpus(4, 8, seed=2)


@pytest.fixture
def tiny_params():
    """A Glorot-initialized network for n=8, d_in=32."""
    return init_params(32, 8, seed=7)


@pytest.fixture
def fast_config():
    """A short training run."""
    return TrainConfig(epochs=2, batch_size=4, learning_rate=2e-4, seed=3, test_count=4)

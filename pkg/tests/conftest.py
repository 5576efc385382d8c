import numpy as np
import pytest

from irsnoma.channel_model import ChannelSet, QosSpec


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_channels(rng, m, n, scale=1.0):
    return ChannelSet(scale * crandn(rng, n, m), scale * crandn(rng, n), scale * crandn(rng, n),
                      scale * crandn(rng, m), scale * crandn(rng, m))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_qos():
    return QosSpec(1.0, 1.0, 1.0)

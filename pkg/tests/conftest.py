import numpy as np
import pytest

from splatprune.quant import QuantConstants, quantify_scene
from splatprune.synth import SynthSpec, generate


@pytest.fixture(scope="session")
def layered50():
    """Medium layered scene shared by read-only tests."""
    return generate(SynthSpec(seed=0, count=50, mode="layered"))


@pytest.fixture(scope="session")
def layered50_scores(layered50):
    scene, views = layered50
    return quantify_scene(scene, views, QuantConstants(), np.zeros(3))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

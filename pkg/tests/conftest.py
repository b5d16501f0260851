import pytest
from hypothesis import settings

from qstab.plants import builtin_demo_plant
from qstab.quantizer import QuantizerConfig
from qstab.synthesis import GridPlan, synthesize

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")


@pytest.fixture(scope="session")
def demo():
    return builtin_demo_plant()


@pytest.fixture(scope="session")
def demo_synth(demo):
    return synthesize(demo, 1 / 3, GridPlan())


@pytest.fixture
def fixture_cfg():
    return QuantizerConfig(delta=1 / 3, u0=1.0, j=2, kbar=2.0)
